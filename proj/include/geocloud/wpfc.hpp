#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "geocloud/geometry.hpp"

namespace geocloud {

using Anchors = std::array<int, 5>;
using LambdaMatrix = Eigen::Matrix<double, Eigen::Dynamic, 5>;

struct QuinticCoefficients {
  double f = 0, fx = 0, fy = 0, fz = 0;
};

// Per-image coefficients of the sixth-point residual as a function of alpha:
// r(alpha) = ((a1 a + a2)^2 + (b1 a + b2)^2) / (c1 a + c2)^2.
struct AlphaSolveInputs {
  double a1 = 0, a2 = 0, b1 = 0, b2 = 0, c1 = 0, c2 = 0;
  double delta = 0;
};

struct WpfcOptions {
  int exhaustive_max_points = 8;  // enumerate every anchor subset up to this M
  int subset_budget = 500;        // random subsets beyond that
  std::uint64_t seed = 0x5eed;
};

struct WpfcDiagnostics {
  int subsets_evaluated = 0;
  int subsets_degenerate = 0;
  // Best objective so far; entry 0 is the closed-form solution.
  std::vector<double> objective_history;
  int descent_violations = 0;
  int fact_violations = 0;
};

LambdaMatrix build_lambda(const CorrespondenceSet& corr, const Anchors& anchors, int m);

std::pair<QuinticCoefficients, Vec3> world_point_from_lambda(const LambdaMatrix& L);

// Five-vector that is parallel to the smallest eigenvector of L^T L at the true point.
Eigen::Matrix<double, 5, 1> quintic_vector(const Vec3& X);

// Camera n from alpha, with beta and gamma fixed by the fifth anchor.
Mat34 assemble_camera(const CorrespondenceSet& corr, const Anchors& anchors, int n, double alpha);

// Least-squares alpha over every non-anchor point, then assembly.
Mat34 recover_projection(const CorrespondenceSet& corr, const Anchors& anchors,
                         const std::vector<std::pair<int, QuinticCoefficients>>& coeffs, int n,
                         double* alpha_out = nullptr);

AlphaSolveInputs alpha_inputs(const CorrespondenceSet& corr, const Anchors& anchors, int m,
                              const QuinticCoefficients& q, int n);

std::vector<double> alpha_closed_form_6(const AlphaSolveInputs& in);

double alpha_residual(const AlphaSolveInputs& in, double alpha);

double objective(const SolutionGroup& g, const CorrespondenceSet& corr);

// Sum of squared reprojection differences of image n only.
double image_objective(const SolutionGroup& g, const CorrespondenceSet& corr, int n);

// Closed-form solution for a fixed anchor subset; throws on degeneracy.
SolutionGroup solve_with_anchors(const CorrespondenceSet& corr, const Anchors& anchors);

SolutionGroup cf_wpfc(const CorrespondenceSet& corr, const WpfcOptions& opts = {},
                      WpfcDiagnostics* diag = nullptr);

struct Orientation2d {
  Mat2 R = Mat2::Identity();
  Vec2 t = Vec2::Zero();
  bool reflection = false;
  double residual = 0;
};

Orientation2d absolute_orientation_2d(const std::vector<Vec2>& src, const std::vector<Vec2>& dst);

Mat34 orientation_update(const Mat34& P, const Mat2& R, const Vec2& t);

SolutionGroup wpfc_iterative(const CorrespondenceSet& corr, int iters = 20,
                             const WpfcOptions& opts = {}, WpfcDiagnostics* diag = nullptr);

}  // namespace geocloud
