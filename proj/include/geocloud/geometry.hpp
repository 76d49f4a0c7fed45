#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "geocloud/error.hpp"

namespace geocloud {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

using ImagePoint = Vec2;
using WorldPoint = Vec3;
// 3x4 camera; entry (2,3) is held at 1.
using ProjectionMatrix = Mat34;
// 4x4 homography of P^3; entry (3,3) is held at 1.
using ProjectiveTransform = Mat4;

struct Tolerances {
  double rank = 1e-10;   // relative to the largest singular value
  double depth = 1e-12;  // absolute bound on homogeneous denominators
};

// Process-wide defaults; read-only after startup.
Tolerances& tolerances();

struct ImageInfo {
  int width = 0;
  int height = 0;
  std::string name;
};

// M x N table of optional image points. Cell (m, n) is point m seen in image n.
class CorrespondenceSet {
 public:
  CorrespondenceSet() = default;
  CorrespondenceSet(int M, int N);

  int M() const { return M_; }
  int N() const { return N_; }

  bool visible(int m, int n) const { return mask_[index(m, n)] != 0; }
  const Vec2& at(int m, int n) const;
  void set(int m, int n, const Vec2& x);
  void clear(int m, int n);

  int visible_count() const;
  bool fully_visible() const;
  // Rows in `points` and columns in `images`, renumbered 0..k-1.
  CorrespondenceSet subset(const std::vector<int>& points, const std::vector<int>& images) const;

  // Optional per-image metadata; empty or of size N.
  std::vector<ImageInfo> images;

 private:
  std::size_t index(int m, int n) const { return static_cast<std::size_t>(m) * N_ + n; }

  int M_ = 0;
  int N_ = 0;
  std::vector<Vec2> cells_;
  std::vector<std::uint8_t> mask_;
};

struct SolutionGroup {
  std::vector<Vec3> points;
  std::vector<Mat34> cameras;
  // Indices of the five points pinned to the canonical gauge, or -1 when not in gauge.
  std::array<int, 5> anchors{-1, -1, -1, -1, -1};

  int M() const { return static_cast<int>(points.size()); }
  int N() const { return static_cast<int>(cameras.size()); }
};

Vec2 project(const Mat34& P, const Vec3& X);

Vec3 triangulate(const std::vector<Mat34>& cams, const std::vector<Vec2>& obs);

Mat34 camera_from_points(const std::vector<Vec3>& points, const std::vector<Vec2>& obs);

// det[x3 - x1, x3 - x2].
double xi(const Vec2& x1, const Vec2& x2, const Vec2& x3);

// Unit eigenvector of a symmetric matrix for its smallest eigenvalue,
// with the largest-magnitude component made positive.
Eigen::VectorXd smallest_eigenvector(const Eigen::MatrixXd& A);

struct NullVector {
  Eigen::VectorXd v;
  double smallest = 0.0;         // sigma_min / sigma_max
  double second_smallest = 0.0;  // sigma_{min+1} / sigma_max
};

// Right singular vector of A for its smallest singular value. This is the
// smallest eigenvector of A^T A computed without squaring the condition number.
NullVector null_vector(const Eigen::MatrixXd& A);

// The five canonical gauge points (0,0,0), (0,0,1), (0,1,0), (1,0,0), (1,1,1).
const std::array<Vec3, 5>& canonical_gauge();

// T with T [src; 1] ~ [dst; 1]. Exactly five pairs whose targets are the
// canonical gauge use the closed-form fifteen-unknown system; otherwise a
// normalized linear fit over all pairs.
Mat4 fit_projective_transform(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

// Transform sending five points onto the canonical gauge.
Mat4 fit_canonical_gauge(const std::array<Vec3, 5>& src);

Vec3 transform_point(const Mat4& T, const Vec3& X);

// X -> dehom(T [X; 1]), P -> P T^-1 rescaled to the gauge.
SolutionGroup apply_transform(const SolutionGroup& g, const Mat4& T);

// Scale P so entry (2,3) is 1.
Mat34 normalize_camera(const Mat34& P);

}  // namespace geocloud
