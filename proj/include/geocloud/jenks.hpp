#pragma once

#include <cstddef>
#include <vector>

namespace geocloud {

struct JenksResult {
  // Class index of every input value, in input order; classes ascend with value.
  std::vector<int> labels;
  std::vector<double> means;
  // Index into the sorted values where each class starts.
  std::vector<std::size_t> starts;
  // Within-class sum of squared deviations.
  double deviance = 0.0;
};

// Optimal contiguous partition of the sorted values into k classes.
JenksResult jenks_cluster_1d(const std::vector<double>& values, int k);

// Optimal partitions for every k in 1..k_max from a single dynamic program.
// Entry k-1 holds the partition into k classes; k_max is capped at the value count.
std::vector<JenksResult> jenks_all_k(const std::vector<double>& values, int k_max);

// Same optimum with equal values kept in one class, so the cost grows with the
// number of distinct values. Starts are left empty.
std::vector<JenksResult> jenks_all_k_grouped(const std::vector<double>& values, int k_max);

}  // namespace geocloud
