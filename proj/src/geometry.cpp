#include "geocloud/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace geocloud {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DepthNearZero: return "DepthNearZero";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::GaugeScaleZero: return "GaugeScaleZero";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::MissingObservation: return "MissingObservation";
    case ErrorCode::DegenerateXi: return "DegenerateXi";
    case ErrorCode::AllDenominatorsZero: return "AllDenominatorsZero";
    case ErrorCode::NoValidSubset: return "NoValidSubset";
    case ErrorCode::DegenerateSet: return "DegenerateSet";
    case ErrorCode::NotOrthogonal: return "NotOrthogonal";
    case ErrorCode::EndpointOutOfBounds: return "EndpointOutOfBounds";
    case ErrorCode::ConstantProfile: return "ConstantProfile";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::NotEmbeddable: return "NotEmbeddable";
    case ErrorCode::InsufficientCovisibility: return "InsufficientCovisibility";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Tolerances& tolerances() {
  static Tolerances t;
  return t;
}

CorrespondenceSet::CorrespondenceSet(int M, int N)
    : M_(M), N_(N), cells_(static_cast<std::size_t>(M) * N, Vec2::Zero()),
      mask_(static_cast<std::size_t>(M) * N, 0) {
  if (M < 0 || N < 0) throw Error(ErrorCode::InvalidArgument, "negative dimensions");
}

const Vec2& CorrespondenceSet::at(int m, int n) const {
  if (!visible(m, n)) {
    throw Error(ErrorCode::MissingObservation,
                "point " + std::to_string(m) + " not observed in image " + std::to_string(n));
  }
  return cells_[index(m, n)];
}

void CorrespondenceSet::set(int m, int n, const Vec2& x) {
  cells_[index(m, n)] = x;
  mask_[index(m, n)] = 1;
}

void CorrespondenceSet::clear(int m, int n) { mask_[index(m, n)] = 0; }

int CorrespondenceSet::visible_count() const {
  int c = 0;
  for (auto b : mask_) c += b;
  return c;
}

bool CorrespondenceSet::fully_visible() const { return visible_count() == M_ * N_; }

CorrespondenceSet CorrespondenceSet::subset(const std::vector<int>& points,
                                            const std::vector<int>& imgs) const {
  CorrespondenceSet out(static_cast<int>(points.size()), static_cast<int>(imgs.size()));
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < imgs.size(); ++j)
      if (visible(points[i], imgs[j])) out.set(int(i), int(j), at(points[i], imgs[j]));
  if (!images.empty())
    for (int n : imgs) out.images.push_back(images[n]);
  return out;
}

Vec2 project(const Mat34& P, const Vec3& X) {
  const Vec3 h = P * X.homogeneous();
  if (std::abs(h.z()) < tolerances().depth) {
    throw Error(ErrorCode::DepthNearZero, "point lies on the camera principal plane");
  }
  return h.hnormalized();
}

namespace {

void fix_sign(Eigen::VectorXd& v) {
  Eigen::Index idx;
  v.cwiseAbs().maxCoeff(&idx);
  if (v(idx) < 0) v = -v;
}

}  // namespace

NullVector null_vector(const Eigen::MatrixXd& A) {
  const Eigen::Index n = A.cols();
  Eigen::MatrixXd work = A;
  if (A.rows() < n) {
    // Pad so the SVD exposes the full right singular basis.
    work = Eigen::MatrixXd::Zero(n, n);
    work.topRows(A.rows()) = A;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(work, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  NullVector out;
  out.v = svd.matrixV().col(n - 1);
  fix_sign(out.v);
  const double smax = s(0) > 0 ? s(0) : 1.0;
  out.smallest = s(n - 1) / smax;
  out.second_smallest = n >= 2 ? s(n - 2) / smax : 1.0;
  return out;
}

Eigen::VectorXd smallest_eigenvector(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols() || A.rows() == 0)
    throw Error(ErrorCode::NotSymmetric, "matrix is not square");
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw Error(ErrorCode::NotSymmetric, "matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NotConverged, "eigen solver failed");
  Eigen::VectorXd v = es.eigenvectors().col(0);
  fix_sign(v);
  return v;
}

Vec3 triangulate(const std::vector<Mat34>& cams, const std::vector<Vec2>& obs) {
  if (cams.size() < 2 || cams.size() != obs.size())
    throw Error(ErrorCode::InvalidArgument, "triangulation needs matching lists of >= 2 views");
  Eigen::MatrixXd H(2 * cams.size(), 4);
  for (std::size_t n = 0; n < cams.size(); ++n) {
    H.row(2 * n) = cams[n].row(0) - obs[n].x() * cams[n].row(2);
    H.row(2 * n + 1) = cams[n].row(1) - obs[n].y() * cams[n].row(2);
  }
  const NullVector nv = null_vector(H);
  if (nv.second_smallest < tolerances().rank)
    throw Error(ErrorCode::RankDeficient, "rays do not determine a unique point");
  const Eigen::Vector4d h = nv.v;
  if (std::abs(h(3)) < tolerances().rank * h.norm())
    throw Error(ErrorCode::DegenerateGeometry, "triangulated point is at infinity");
  return h.head<3>() / h(3);
}

Mat34 camera_from_points(const std::vector<Vec3>& points, const std::vector<Vec2>& obs) {
  if (points.size() < 6 || points.size() != obs.size())
    throw Error(ErrorCode::InvalidArgument, "resection needs matching lists of >= 6 points");
  // Rows are the columns of the 12 x 2M system in the row-major vec(P) ordering.
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(2 * points.size(), 12);
  for (std::size_t m = 0; m < points.size(); ++m) {
    const Vec3& X = points[m];
    const double u = obs[m].x(), v = obs[m].y();
    K.block<1, 3>(2 * m, 0) = X.transpose();
    K(2 * m, 3) = 1.0;
    K.block<1, 3>(2 * m, 8) = -u * X.transpose();
    K(2 * m, 11) = -u;
    K.block<1, 3>(2 * m + 1, 4) = X.transpose();
    K(2 * m + 1, 7) = 1.0;
    K.block<1, 3>(2 * m + 1, 8) = -v * X.transpose();
    K(2 * m + 1, 11) = -v;
  }
  const NullVector nv = null_vector(K);
  if (nv.second_smallest < tolerances().rank)
    throw Error(ErrorCode::RankDeficient, "points do not determine a unique camera");
  if (std::abs(nv.v(11)) < tolerances().rank)
    throw Error(ErrorCode::GaugeScaleZero, "camera entry (3,4) vanishes");
  Mat34 P;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) P(r, c) = nv.v(4 * r + c) / nv.v(11);
  P(2, 3) = 1.0;
  return P;
}

double xi(const Vec2& x1, const Vec2& x2, const Vec2& x3) {
  const Vec2 a = x3 - x1;
  const Vec2 b = x3 - x2;
  return a.x() * b.y() - a.y() * b.x();
}

const std::array<Vec3, 5>& canonical_gauge() {
  static const std::array<Vec3, 5> g{Vec3(0, 0, 0), Vec3(0, 0, 1), Vec3(0, 1, 0), Vec3(1, 0, 0),
                                     Vec3(1, 1, 1)};
  return g;
}

Vec3 transform_point(const Mat4& T, const Vec3& X) {
  const Vec4 h = T * X.homogeneous();
  if (std::abs(h(3)) < tolerances().depth * std::max(1.0, h.head<3>().norm()))
    throw Error(ErrorCode::PointAtInfinity, "transformed point lies on the plane at infinity");
  return h.head<3>() / h(3);
}

Mat34 normalize_camera(const Mat34& P) {
  if (std::abs(P(2, 3)) < tolerances().depth * std::max(1.0, P.norm()))
    throw Error(ErrorCode::GaugeScaleZero, "camera entry (3,4) vanishes");
  Mat34 out = P / P(2, 3);
  out(2, 3) = 1.0;
  return out;
}

namespace {

Mat4 normalizer(const std::vector<Vec3>& pts);

Mat4 fit_canonical_gauge_raw(const std::array<Vec3, 5>& X) {
  Eigen::Matrix<double, 15, 15> A = Eigen::Matrix<double, 15, 15>::Zero();
  Eigen::Matrix<double, 15, 1> b = Eigen::Matrix<double, 15, 1>::Zero();
  // Unknown layout: t11..t14 | t21..t24 | t31..t34 | t41..t43, with t44 = 1.
  auto h = [](const Vec3& p) { return Vec4(p.x(), p.y(), p.z(), 1.0); };
  auto put = [&](int row, int block, const Vec4& v, double sign = 1.0) {
    A.block<1, 4>(row, 4 * block) += sign * v.transpose();
  };
  auto put_last = [&](int row, const Vec3& p, double sign) {
    A.block<1, 3>(row, 12) += sign * p.transpose();
  };
  put(0, 0, h(X[0]));
  put(1, 1, h(X[0]));
  put(2, 2, h(X[0]));
  put_last(3, X[0], 1.0);
  put(4, 0, h(X[1]));
  put(5, 1, h(X[1]));
  put(6, 2, h(X[1]));
  put_last(6, X[1], -1.0);
  b(6) = 1.0;
  put(7, 0, h(X[2]));
  put(8, 1, h(X[2]));
  put_last(8, X[2], -1.0);
  b(8) = 1.0;
  put(9, 2, h(X[2]));
  put(10, 0, h(X[3]));
  put_last(10, X[3], -1.0);
  b(10) = 1.0;
  put(11, 1, h(X[3]));
  put(12, 2, h(X[3]));
  put(13, 0, h(X[4]));
  put(13, 1, h(X[4]), -1.0);
  put(14, 0, h(X[4]));
  put(14, 2, h(X[4]), -1.0);

  Eigen::FullPivLU<Eigen::Matrix<double, 15, 15>> lu(A);
  lu.setThreshold(tolerances().rank);
  if (!lu.isInvertible())
    throw Error(ErrorCode::SingularSystem, "anchor configuration is degenerate");
  const Eigen::Matrix<double, 15, 1> t = lu.solve(b);
  Mat4 That;
  That << t(0), t(1), t(2), t(3), t(4), t(5), t(6), t(7), t(8), t(9), t(10), t(11), t(12), t(13),
      t(14), 1.0;

  // The fifth point lands on alpha*(1,1,1); a diagonal-plus-row transform pulls it to (1,1,1).
  const Vec4 h5 = That * h(X[4]);
  if (std::abs(h5(3)) < tolerances().depth)
    throw Error(ErrorCode::SingularSystem, "fifth anchor maps to infinity");
  const double alpha = h5.head<3>().mean() / h5(3);
  if (std::abs(alpha) < tolerances().rank || std::abs(3.0 * alpha - 1.0) < tolerances().rank)
    throw Error(ErrorCode::SingularSystem, "normalizing transform is singular");
  const double d = (3.0 * alpha - 1.0) / (2.0 * alpha);
  const double r = (alpha - 1.0) / (2.0 * alpha);
  Mat4 T2;
  T2 << d, 0, 0, 0, 0, d, 0, 0, 0, 0, d, 0, r, r, r, 1;
  Mat4 T = T2 * That;
  if (std::abs(T(3, 3)) < tolerances().depth)
    throw Error(ErrorCode::SingularSystem, "composed transform has vanishing scale");
  T /= T(3, 3);
  return T;
}

}  // namespace

// The last normalization row degenerates when the first point sits at the
// origin, so the fit runs on centred, scaled coordinates.
Mat4 fit_canonical_gauge(const std::array<Vec3, 5>& X) {
  const Mat4 N = normalizer(std::vector<Vec3>(X.begin(), X.end()));
  std::array<Vec3, 5> Y;
  for (int i = 0; i < 5; ++i) Y[i] = transform_point(N, X[i]);
  Mat4 T = fit_canonical_gauge_raw(Y) * N;
  if (std::abs(T(3, 3)) < tolerances().depth)
    throw Error(ErrorCode::SingularSystem, "composed transform has vanishing scale");
  return T / T(3, 3);
}

namespace {

// Similarity normalizing a point set to zero centroid and mean distance sqrt(3).
Mat4 normalizer(const std::vector<Vec3>& pts) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= double(pts.size());
  double mean = 0;
  for (const auto& p : pts) mean += (p - c).norm();
  mean /= double(pts.size());
  const double s = mean > 0 ? std::sqrt(3.0) / mean : 1.0;
  Mat4 N = Mat4::Identity();
  N.topLeftCorner<3, 3>() *= s;
  N.topRightCorner<3, 1>() = -s * c;
  return N;
}

}  // namespace

Mat4 fit_projective_transform(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() < 5 || src.size() != dst.size())
    throw Error(ErrorCode::InvalidArgument, "need >= 5 matching point pairs");
  if (src.size() == 5) {
    bool canonical = true;
    for (int i = 0; i < 5; ++i) canonical = canonical && dst[i] == canonical_gauge()[i];
    if (canonical) return fit_canonical_gauge({src[0], src[1], src[2], src[3], src[4]});
  }
  const Mat4 Ns = normalizer(src);
  const Mat4 Nd = normalizer(dst);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3 * src.size(), 16);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec4 x = Ns * src[i].homogeneous();
    const Vec4 y = Nd * dst[i].homogeneous();
    for (int r = 0; r < 3; ++r) {
      // y_4 (T x)_r - y_r (T x)_4 = 0
      A.block<1, 4>(3 * i + r, 4 * r) = y(3) * x.transpose();
      A.block<1, 4>(3 * i + r, 12) = -y(r) * x.transpose();
    }
  }
  const NullVector nv = null_vector(A);
  if (nv.second_smallest < tolerances().rank)
    throw Error(ErrorCode::SingularSystem, "point pairs do not determine a unique transform");
  Mat4 Tn;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) Tn(r, c) = nv.v(4 * r + c);
  Mat4 T = Nd.inverse() * Tn * Ns;
  if (std::abs(T.determinant()) < tolerances().rank * std::pow(T.norm(), 4))
    throw Error(ErrorCode::SingularSystem, "fitted transform is singular");
  if (std::abs(T(3, 3)) < tolerances().rank * T.norm())
    throw Error(ErrorCode::GaugeScaleZero, "transform entry (4,4) vanishes");
  T /= T(3, 3);
  return T;
}

SolutionGroup apply_transform(const SolutionGroup& g, const Mat4& T) {
  Eigen::FullPivLU<Mat4> lu(T);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularSystem, "transform is singular");
  const Mat4 Ti = lu.inverse();
  SolutionGroup out;
  out.anchors = g.anchors;
  out.points.reserve(g.points.size());
  for (const auto& X : g.points) out.points.push_back(transform_point(T, X));
  out.cameras.reserve(g.cameras.size());
  for (const auto& P : g.cameras) out.cameras.push_back(normalize_camera(P * Ti));
  return out;
}

}  // namespace geocloud
