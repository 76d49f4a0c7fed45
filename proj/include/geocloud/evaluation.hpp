#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "geocloud/crpc.hpp"
#include "geocloud/geometry.hpp"

namespace geocloud {

// Mean Euclidean reprojection distance over the visible cells whose point and
// camera are both finite.
double relative_error_group(const SolutionGroup& g, const CorrespondenceSet& corr);

// (E_d / sqrt(H^2 + W^2))^E_i.
double relative_error_point(const CloudPoint& p, double H, double W);

// Nearest-rank percentile: the smallest value with at least pct percent of the
// data at or below it.
double nearest_rank_percentile(std::vector<double> values, double pct);

struct KeyPointDifference {
  int point_id = 0;
  int image_id = 0;
  double diff_px = 0.0;
};

// Distances between the marked image points and the reprojections of the group.
std::vector<KeyPointDifference> key_point_differences(const SolutionGroup& g,
                                                      const CorrespondenceSet& corr);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  // "mean", "p95", "mean;p95" or empty.
  std::string marker;
};

struct CloudSummary {
  std::size_t count = 0;
  double e_d_mean = 0.0;
  double e_d_p95 = 0.0;
  double e_i_mean = 0.0;
  double relative_error_mean = 0.0;
};

struct ErrorReport {
  std::vector<KeyPointDifference> differences;
  double mean = 0.0;
  double p95 = 0.0;
  std::size_t count = 0;
  // One-pixel bins over [0, 100); the last bin also takes 100 exactly.
  std::vector<HistogramBin> histogram;
  std::size_t above_range = 0;
  bool has_cloud = false;
  CloudSummary cloud;
};

// Throws EmptyData when there are no differences. The cloud summary is filled
// when cloud is nonempty; H and W are the image size for the point error.
ErrorReport make_report(const std::vector<KeyPointDifference>& diffs,
                        const PointCloud& cloud = {}, double H = 0.0, double W = 0.0);

// Writes raw.csv, summary.csv, histogram.csv and histogram.png into dir, plus
// cloud_summary.csv when the report has a cloud.
void emit_report(const ErrorReport& report, const std::filesystem::path& dir);

}  // namespace geocloud
