#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "geocloud/geometry.hpp"
#include "geocloud/image.hpp"
#include "geocloud/jenks.hpp"

namespace geocloud {

struct ImageLineProfile {
  int L = 0;
  Eigen::VectorXd values;
  ImagePoint a = ImagePoint::Zero();
  ImagePoint b = ImagePoint::Zero();
};

// Nearest-pixel intensities at L evenly spaced points from a to b inclusive.
Eigen::VectorXd raw_line_samples(const GrayImage& img, const ImagePoint& a, const ImagePoint& b,
                                 int L);

// Samples normalized to unit norm; centered profiles are mean-subtracted first.
ImageLineProfile sample_image_line(const GrayImage& img, const ImagePoint& a, const ImagePoint& b,
                                   int L, bool centered = true);

double pearson(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

// Sample count for a segment: its infinity-norm pixel span, at least 2.
int segment_samples(const ImagePoint& a, const ImagePoint& b);

// Nearest even integer, never below min_value.
int round_even(double x, int min_value = 8);

struct SimilarityResult {
  bool similar = false;
  int L = 0;
  double correlation = 0.0;
};

SimilarityResult similar_pair(const GrayImage& img_i, const GrayImage& img_j, const ImagePoint& ai,
                              const ImagePoint& bi, const ImagePoint& aj, const ImagePoint& bj,
                              double theta, bool centered = true);
SimilarityResult similar_pair(const GrayImage& img_i, const GrayImage& img_j, const Mat34& Pi,
                              const Mat34& Pj, const Vec3& Xk, const Vec3& Xk2, double theta,
                              bool centered = true);

struct WindowMatch {
  int li = 0;
  int lj = 0;
  double corr = 0.0;
  ImagePoint xi = ImagePoint::Zero();
  ImagePoint xj = ImagePoint::Zero();
};

struct ScanOptions {
  double theta = 0.3;
  int ell = 8;
  // Shared sample count; 0 uses the larger span of the two segments.
  int L = 0;
  bool centered = true;
  // Matches that are not the window maximum within this many samples in both
  // offsets are dropped; negative picks ell / 4, zero keeps every match.
  int suppress_radius = -1;
  // Keep only matches that are the best of their row and column; overrides
  // the radius rule.
  bool mutual_best = true;
};

// Correlation of the windows of ell + 1 samples centred at li and lj.
double window_correlation(const Eigen::VectorXd& si, const Eigen::VectorXd& sj, int li, int lj,
                          int ell, bool centered = true);

// Point at sample l of an L-sample grid from a to b.
ImagePoint grid_point(const ImagePoint& a, const ImagePoint& b, double l, int L);

std::vector<WindowMatch> pairwise_candidate_scan(const GrayImage& img_i, const GrayImage& img_j,
                                                 const ImagePoint& ai, const ImagePoint& bi,
                                                 const ImagePoint& aj, const ImagePoint& bj,
                                                 const ScanOptions& opts);

struct ClusteredSegment {
  std::vector<double> means;
  // Cluster of every raw position, in input order.
  std::vector<int> labels;
};

// Jenks clustering with the largest k <= k_max whose adjacent class means are
// more than ell / 2 samples apart.
ClusteredSegment cluster_segment(const std::vector<double>& offsets, int ell, int k_max = 12);

// One raw match between position point_a of image_a and point_b of image_b.
struct MatchLink {
  int image_a = 0;
  int point_a = 0;
  int image_b = 0;
  int point_b = 0;
};

// Shared sample grid of one anchor pair; a and b hold per-image endpoints.
struct LineGrid {
  int L = 0;
  int ell = 0;
  std::vector<ImagePoint> a;
  std::vector<ImagePoint> b;
};

struct GeoFeatureCandidate {
  std::vector<int> images;
  std::vector<int> offsets;
  std::vector<ImagePoint> points;
  int ell = 0;
  int L = 0;
};

// Maximal cliques of the cluster-level match graph with at least min_size images.
// Enumeration stops after max_candidates cliques.
std::vector<GeoFeatureCandidate> build_candidate_set(const std::vector<ClusteredSegment>& clusters,
                                                     const std::vector<MatchLink>& links,
                                                     const LineGrid& grid, int min_size = 2,
                                                     std::size_t max_candidates = 200000);

// Mean reprojection distance and image count.
std::pair<double, int> evaluate_point(const Vec3& X, const GeoFeatureCandidate& cand,
                                      const std::vector<Mat34>& cams);

struct JointFeature {
  std::vector<int> starts;
  std::vector<int> midpoints;
  double objective = 0.0;
};

// Exhaustive window search over the columns of profiles (L x J). Windows span
// ell + 1 samples beginning at each start.
JointFeature geo_feature_joint(const Eigen::MatrixXd& profiles, int ell, bool centered = true);

struct CloudPoint {
  Vec3 position = Vec3::Zero();
  double e_d = 0.0;
  int e_i = 0;
  int anchor_a = -1;
  int anchor_b = -1;
  int level = 0;
  std::vector<int> views;
};

using PointCloud = std::vector<CloudPoint>;

struct CrpcOptions {
  double theta = 0.3;
  double ell_frac = 0.1;
  double tau_d = 40.0;
  int tau_i = 7;
  bool centered = true;
  int k_max = 12;
  std::size_t max_candidates = 200000;
  // Images to consider; empty means all.
  std::vector<bool> image_mask;
};

struct CrpcStats {
  int images_used = 0;
  int L = 0;
  int ell = 0;
  int pairs_tested = 0;
  int pairs_similar = 0;
  std::size_t raw_matches = 0;
  std::size_t candidates = 0;
  std::size_t emitted = 0;
};

PointCloud crpc(const std::vector<Mat34>& cams, const std::vector<GrayImage>& images,
                const Vec3& Xk, const Vec3& Xk2, const CrpcOptions& opts,
                CrpcStats* stats = nullptr);

}  // namespace geocloud
