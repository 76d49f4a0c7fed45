#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "geocloud/crpc.hpp"
#include "geocloud/geometry.hpp"
#include "geocloud/image.hpp"
#include "geocloud/wpfc.hpp"

namespace geocloud {

struct DistanceMeasurements {
  std::vector<int> ids;
  // Symmetric matrix of pairwise distances, indexed like ids.
  Eigen::MatrixXd D;
};

// Classical multidimensional scaling into three dimensions, centred at the origin
// with axes ordered by decreasing eigenvalue.
std::vector<Vec3> mds_embed(const DistanceMeasurements& d);

struct GaugeSolution {
  SolutionGroup group;
  std::vector<bool> point_solved;
  std::vector<bool> camera_solved;
  // Points and images of the covisible block solved by the iterative solver.
  std::vector<int> block_points;
  std::vector<int> block_images;
  WpfcDiagnostics diagnostics;
};

// Largest fully covisible block (>= 6 points, >= 5 images) containing every
// required point, found greedily; throws InsufficientCovisibility.
std::pair<std::vector<int>, std::vector<int>> find_covisible_block(
    const CorrespondenceSet& corr, const std::vector<int>& required = {});

// Iterative solve of the covisible block, then alternate camera resection and
// point triangulation until nothing more can be solved.
GaugeSolution solve_gauge(const CorrespondenceSet& corr, const std::vector<int>& required = {},
                          int iters = 20, const WpfcOptions& opts = {});

// Map a solved group into the metric frame given by seed coordinates. Five or
// more seeds use a projective fit; four seeds fix the remaining freedom by
// asking for zero-skew, unit-aspect cameras.
// Principal point guesses for the four-seed case come from the image sizes in
// corr, else from the observation centroids.
Mat4 metric_alignment(const GaugeSolution& sol, const std::map<int, Vec3>& seeds,
                      const CorrespondenceSet& corr);

// Solve in the gauge frame and align to the metric seeds. Unsolved points and
// cameras are left as NaN.
SolutionGroup seed_and_solve(const CorrespondenceSet& corr, const std::map<int, Vec3>& seeds,
                             int iters = 20, const WpfcOptions& opts = {},
                             GaugeSolution* gauge = nullptr);

// Greedy by ascending E_d; a point is kept when it is at least delta from every
// kept point.
PointCloud select_best_spread(const PointCloud& cloud, double delta);

struct GrowthConfig {
  double theta = 0.3;
  double ell_frac = 0.1;
  double tau_d = 40.0;
  int tau_i = 7;
  // Spread distance used to pick the seeds of the next level; the last entry repeats.
  std::vector<double> spread = {0.5, 0.05};
  int max_levels = 2;
  // Pair each seed with only its nearest seeds; 0 pairs every seed.
  int neighbor_limit = 0;
  // Cap on anchor pairs per level, shortest pairs first; 0 means no cap.
  std::size_t max_pairs_per_level = 0;
  bool centered = true;
};

struct GrowthStats {
  std::vector<std::size_t> seeds_per_level;
  std::vector<std::size_t> points_per_level;
  std::vector<std::size_t> pairs_per_level;
};

// Level-0 cloud points from a solved group: E_d against the observations and
// E_i the number of observing images.
PointCloud seed_cloud(const SolutionGroup& group, const CorrespondenceSet& corr);

PointCloud grow_point_cloud(const SolutionGroup& group, const CorrespondenceSet& corr,
                            const std::vector<GrayImage>& images, const GrowthConfig& cfg,
                            GrowthStats* stats = nullptr);

// Strict local E_d minima within delta, ties broken by index; these satisfy the
// subset, minimality and spacing properties and no larger subset does.
PointCloud refine_by_distance(const PointCloud& pc, double delta);

PointCloud refine_by_pixel(const PointCloud& pc, double epsilon);

}  // namespace geocloud
