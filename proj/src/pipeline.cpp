#include "geocloud/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_map>

#include <spdlog/spdlog.h>
#include <Eigen/Geometry>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "geocloud/error.hpp"

namespace geocloud {

std::vector<Vec3> mds_embed(const DistanceMeasurements& d) {
  const int K = int(d.D.rows());
  if (K < 4 || d.D.cols() != K)
    throw Error(ErrorCode::NotEmbeddable, "need a square distance matrix over at least 4 points");
  if (!d.ids.empty() && int(d.ids.size()) != K)
    throw Error(ErrorCode::DimensionMismatch, "distance ids do not match the matrix");
  const double scale = d.D.cwiseAbs().maxCoeff();
  if (!(scale > 0) || !d.D.allFinite())
    throw Error(ErrorCode::NotEmbeddable, "distances must be finite and not all zero");
  const double tol = 1e-9 * scale;
  for (int i = 0; i < K; ++i) {
    if (std::abs(d.D(i, i)) > tol) throw Error(ErrorCode::NotEmbeddable, "nonzero self distance");
    for (int j = 0; j < K; ++j) {
      if (std::abs(d.D(i, j) - d.D(j, i)) > tol)
        throw Error(ErrorCode::NotEmbeddable, "distance matrix is not symmetric");
      if (i != j && !(d.D(i, j) > 0))
        throw Error(ErrorCode::NotEmbeddable, "distances between distinct points must be positive");
      for (int k = 0; k < K; ++k)
        if (d.D(i, k) > d.D(i, j) + d.D(j, k) + tol)
          throw Error(ErrorCode::NotEmbeddable, "triangle inequality violated");
    }
  }

  const Eigen::MatrixXd J =
      Eigen::MatrixXd::Identity(K, K) - Eigen::MatrixXd::Constant(K, K, 1.0 / K);
  const Eigen::MatrixXd B = -0.5 * J * d.D.cwiseAbs2() * J;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NotEmbeddable, "eigensolver failed");
  // Eigenvalues ascend; the three largest span the embedding.
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double top = lam(K - 1);
  const double etol = 1e-8 * std::max(top, scale * scale);
  if (lam(0) < -etol) throw Error(ErrorCode::NotEmbeddable, "Gram matrix is not positive semidefinite");
  if (K > 3 && lam(K - 4) > etol)
    throw Error(ErrorCode::NotEmbeddable, "distances need more than three dimensions");

  std::vector<Vec3> out(K, Vec3::Zero());
  for (int axis = 0; axis < 3; ++axis) {
    const double l = std::max(0.0, lam(K - 1 - axis));
    Eigen::VectorXd v = es.eigenvectors().col(K - 1 - axis);
    Eigen::Index idx;
    v.cwiseAbs().maxCoeff(&idx);
    if (v(idx) < 0) v = -v;
    for (int i = 0; i < K; ++i) out[i][axis] = std::sqrt(l) * v(i);
  }
  return out;
}

std::pair<std::vector<int>, std::vector<int>> find_covisible_block(
    const CorrespondenceSet& corr, const std::vector<int>& required) {
  const int M = corr.M(), N = corr.N();
  for (int m : required)
    if (m < 0 || m >= M)
      throw Error(ErrorCode::InsufficientCovisibility, "required point is not in the correspondences");

  std::vector<int> cand;
  for (int n = 0; n < N; ++n) {
    bool ok = true;
    for (int m : required) ok = ok && corr.visible(m, n);
    if (ok) cand.push_back(n);
  }
  std::vector<int> best_pts, best_imgs;
  long best_score = -1;
  for (int start : cand) {
    std::vector<char> pts(M, 0);
    for (int m = 0; m < M; ++m) pts[m] = corr.visible(m, start);
    std::vector<int> chosen{start};
    std::vector<char> used(N, 0);
    used[start] = 1;
    while (true) {
      const long np = std::count(pts.begin(), pts.end(), 1);
      if (int(chosen.size()) >= 5 && np >= 6) {
        const long score = np * long(chosen.size());
        if (score > best_score) {
          best_score = score;
          best_imgs = chosen;
          best_pts.clear();
          for (int m = 0; m < M; ++m)
            if (pts[m]) best_pts.push_back(m);
        }
      }
      int pick = -1;
      long pick_np = -1;
      for (int n : cand) {
        if (used[n]) continue;
        long c = 0;
        for (int m = 0; m < M; ++m) c += pts[m] && corr.visible(m, n);
        if (c > pick_np) {
          pick_np = c;
          pick = n;
        }
      }
      if (pick < 0 || pick_np < 6) break;
      used[pick] = 1;
      chosen.push_back(pick);
      for (int m = 0; m < M; ++m) pts[m] = pts[m] && corr.visible(m, pick);
    }
  }
  if (best_score < 0)
    throw Error(ErrorCode::InsufficientCovisibility,
                "no covisible block of 6 points and 5 images contains the seeds");
  std::sort(best_imgs.begin(), best_imgs.end());
  return {best_pts, best_imgs};
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Resect cameras seeing >= 6 solved points and triangulate points seen by >= 2
// solved cameras until nothing changes.
void expand_solution(const CorrespondenceSet& corr, SolutionGroup& g, std::vector<bool>& psolved,
                     std::vector<bool>& csolved) {
  const int M = corr.M(), N = corr.N();
  bool changed = true;
  while (changed) {
    changed = false;
    for (int n = 0; n < N; ++n) {
      if (csolved[n]) continue;
      std::vector<Vec3> X;
      std::vector<Vec2> x;
      for (int m = 0; m < M; ++m)
        if (psolved[m] && corr.visible(m, n)) {
          X.push_back(g.points[m]);
          x.push_back(corr.at(m, n));
        }
      if (X.size() < 6) continue;
      try {
        g.cameras[n] = camera_from_points(X, x);
        csolved[n] = true;
        changed = true;
      } catch (const Error& e) {
        spdlog::debug("camera {} not resected: {}", n, e.what());
      }
    }
    for (int m = 0; m < M; ++m) {
      if (psolved[m]) continue;
      std::vector<Mat34> P;
      std::vector<Vec2> x;
      for (int n = 0; n < N; ++n)
        if (csolved[n] && corr.visible(m, n)) {
          P.push_back(g.cameras[n]);
          x.push_back(corr.at(m, n));
        }
      if (P.size() < 2) continue;
      try {
        g.points[m] = triangulate(P, x);
        psolved[m] = true;
        changed = true;
      } catch (const Error& e) {
        spdlog::debug("point {} not triangulated: {}", m, e.what());
      }
    }
  }
}

void fill_unsolved(SolutionGroup& g, const std::vector<bool>& psolved,
                   const std::vector<bool>& csolved) {
  for (std::size_t m = 0; m < g.points.size(); ++m)
    if (!psolved[m]) g.points[m] = Vec3::Constant(kNaN);
  for (std::size_t n = 0; n < g.cameras.size(); ++n)
    if (!csolved[n]) g.cameras[n] = Mat34::Constant(kNaN);
}

GaugeSolution solve_block(const CorrespondenceSet& corr, const std::vector<int>& required,
                          int iters, const WpfcOptions& opts) {
  GaugeSolution sol;
  auto [pts, imgs] = find_covisible_block(corr, required);
  // Put required points first so they are preferred anchors.
  std::stable_partition(pts.begin(), pts.end(), [&](int m) {
    return std::find(required.begin(), required.end(), m) != required.end();
  });
  sol.block_points = pts;
  sol.block_images = imgs;
  const SolutionGroup sub = wpfc_iterative(corr.subset(pts, imgs), iters, opts, &sol.diagnostics);
  sol.group.points.assign(corr.M(), Vec3::Zero());
  sol.group.cameras.assign(corr.N(), Mat34::Zero());
  sol.point_solved.assign(corr.M(), false);
  sol.camera_solved.assign(corr.N(), false);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    sol.group.points[pts[i]] = sub.points[i];
    sol.point_solved[pts[i]] = true;
  }
  for (std::size_t j = 0; j < imgs.size(); ++j) {
    sol.group.cameras[imgs[j]] = sub.cameras[j];
    sol.camera_solved[imgs[j]] = true;
  }
  for (int k = 0; k < 5; ++k) sol.group.anchors[k] = sub.anchors[k] < 0 ? -1 : pts[sub.anchors[k]];
  return sol;
}

// Upper-triangular K with K K^T = M M^T and positive diagonal.
bool intrinsics(const Mat3& M, Mat3& K) {
  const Mat3 w = M * M.transpose();
  Mat3 F = Mat3::Zero();
  F(0, 2) = F(1, 1) = F(2, 0) = 1.0;
  Eigen::LLT<Mat3> llt(F * w * F);
  if (llt.info() != Eigen::Success) return false;
  K = F * Mat3(llt.matrixL()) * F;
  return K(0, 0) > 0 && std::isfinite(K(0, 0));
}

// Skew and aspect residuals of the cameras under T(c) = sum c_k basis_k.
struct SelfCalibration {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  std::vector<Mat34> cams;
  std::array<Mat4, 4> basis;

  int inputs() const { return 4; }
  int values() const { return int(2 * cams.size() + 1); }

  Mat4 transform(const Eigen::VectorXd& c) const {
    Mat4 T = Mat4::Zero();
    for (int k = 0; k < 4; ++k) T += c(k) * basis[k];
    return T;
  }

  int operator()(const Eigen::VectorXd& c, Eigen::VectorXd& r) const {
    r.resize(values());
    r(values() - 1) = c.squaredNorm() - 1.0;
    Eigen::FullPivLU<Mat4> lu(transform(c));
    if (!lu.isInvertible()) {
      r.head(values() - 1).setConstant(1e3);
      return 0;
    }
    const Mat4 Ti = lu.inverse();
    for (std::size_t n = 0; n < cams.size(); ++n) {
      const Mat34 P = cams[n] * Ti;
      Mat3 K;
      if (!intrinsics(P.leftCols<3>(), K)) {
        r(2 * n) = r(2 * n + 1) = 1e3;
        continue;
      }
      r(2 * n) = K(0, 1) / K(0, 0);
      r(2 * n + 1) = K(1, 1) / K(0, 0) - 1.0;
    }
    return 0;
  }
};

// Linear absolute dual quadric for square-pixel, zero-skew cameras with the
// principal points at pps, turned into a gauge-to-metric transform through a
// similarity fit on the seeds. Returns nothing when the estimate is unusable.
std::optional<Mat4> dual_quadric_alignment(const std::vector<Vec3>& gauge,
                                           const std::vector<Vec3>& metric,
                                           const std::vector<Mat34>& cams,
                                           const std::vector<Vec2>& pps,
                                           const std::vector<Vec3>& cloud) {
  // Similarity normalizing the gauge cloud.
  Vec3 mean = Vec3::Zero();
  for (const auto& X : cloud) mean += X;
  mean /= double(cloud.size());
  double spread = 0;
  for (const auto& X : cloud) spread += (X - mean).norm();
  spread = spread > 0 ? spread / double(cloud.size()) : 1.0;
  Mat4 Nrm = Mat4::Identity();
  Nrm.topLeftCorner<3, 3>() /= spread;
  Nrm.topRightCorner<3, 1>() = -mean / spread;
  const Mat4 Ninv = Nrm.inverse();

  const int C = int(cams.size());
  Eigen::MatrixXd A(4 * C, 10);
  const int idx[4][4] = {{0, 1, 2, 3}, {1, 4, 5, 6}, {2, 5, 7, 8}, {3, 6, 8, 9}};
  for (int n = 0; n < C; ++n) {
    Mat3 S = Mat3::Identity();
    S(0, 2) = -pps[n].x();
    S(1, 2) = -pps[n].y();
    const Mat34 P = (S * cams[n] * Ninv).normalized();
    // Row of coefficients of entry (a, b) of P Q P^T.
    auto coeff = [&](int a, int b) {
      Eigen::Matrix<double, 1, 10> row = Eigen::Matrix<double, 1, 10>::Zero();
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) row(idx[i][j]) += P(a, i) * P(b, j);
      return row;
    };
    A.row(4 * n) = coeff(0, 1);
    A.row(4 * n + 1) = coeff(0, 2);
    A.row(4 * n + 2) = coeff(1, 2);
    A.row(4 * n + 3) = coeff(0, 0) - coeff(1, 1);
  }
  if (A.rows() < 9) return std::nullopt;
  const Eigen::VectorXd q = null_vector(A).v;
  Mat4 Q;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) Q(i, j) = q(idx[i][j]);

  Eigen::SelfAdjointEigenSolver<Mat4> es(Q);
  Vec4 lam = es.eigenvalues();
  Mat4 V = es.eigenvectors();
  std::array<int, 4> order{0, 1, 2, 3};
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return std::abs(lam(a)) > std::abs(lam(b)); });
  const double sign = lam(order[0]) + lam(order[1]) + lam(order[2]) > 0 ? 1.0 : -1.0;
  Mat4 H;
  for (int k = 0; k < 3; ++k) {
    const double l = sign * lam(order[k]);
    if (!(l > 0)) return std::nullopt;
    H.col(k) = std::sqrt(l) * V.col(order[k]);
  }
  H.col(3) = V.col(order[3]);
  Eigen::FullPivLU<Mat4> lu(H);
  if (!lu.isInvertible()) return std::nullopt;
  const Mat4 Hinv = lu.inverse();

  Eigen::Matrix<double, 3, 4> src, dst;
  for (int s = 0; s < 4; ++s) {
    const Vec4 y = Hinv * Nrm * gauge[s].homogeneous();
    if (std::abs(y(3)) < 1e-12 * y.norm()) return std::nullopt;
    src.col(s) = y.hnormalized();
    dst.col(s) = metric[s];
  }
  std::optional<Mat4> best;
  double best_res = std::numeric_limits<double>::infinity();
  for (double mirror : {1.0, -1.0}) {
    Mat4 D = Mat4::Identity();
    D(2, 2) = mirror;
    const Eigen::Matrix<double, 3, 4> s2 = D.topLeftCorner<3, 3>() * src;
    const Mat4 Sim = Eigen::umeyama(s2, dst, true);
    const double res =
        ((Sim.topLeftCorner<3, 3>() * s2).colwise() + Sim.topRightCorner<3, 1>() - dst).norm();
    if (res < best_res) {
      best_res = res;
      best = Sim * D * Hinv * Nrm;
    }
  }
  return best;
}

Mat4 four_seed_alignment(const std::vector<Vec3>& gauge, const std::vector<Vec3>& metric,
                         const std::vector<Mat34>& cams, const std::vector<Vec2>& pps,
                         const std::vector<Vec3>& cloud) {
  // T h(g) is parallel to h(X): three linear equations per seed on row-major vec(T).
  Eigen::Matrix<double, 12, 16> A = Eigen::Matrix<double, 12, 16>::Zero();
  for (int s = 0; s < 4; ++s) {
    const Vec4 g = gauge[s].homogeneous();
    const Vec3& X = metric[s];
    for (int r = 0; r < 3; ++r) {
      A.block<1, 4>(3 * s + r, 4 * r) = g.transpose();
      A.block<1, 4>(3 * s + r, 12) = -X(r) * g.transpose();
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(11) < 1e-10 * sv(0))
    throw Error(ErrorCode::DegenerateGeometry, "the four seeds are coplanar or repeated");
  SelfCalibration f;
  f.cams = cams;
  for (int k = 0; k < 4; ++k) {
    const Eigen::VectorXd v = svd.matrixV().col(12 + k);
    for (int i = 0; i < 16; ++i) f.basis[k](i / 4, i % 4) = v(i);
  }
  if (f.values() < 5)
    throw Error(ErrorCode::InsufficientCovisibility, "need two solved cameras for four seeds");

  // Start from the linear estimate; cheirality barriers split the parameter
  // space into cells, so also try the best points of a grid over the faces of
  // the unit cube.
  Eigen::VectorXd r;
  std::vector<std::pair<double, Eigen::VectorXd>> grid;
  if (const auto T0 = dual_quadric_alignment(gauge, metric, cams, pps, cloud)) {
    Eigen::VectorXd c(4);
    for (int k = 0; k < 4; ++k) c(k) = (f.basis[k].array() * T0->array()).sum();
    if (c.norm() > 0) {
      c.normalize();
      f(c, r);
      grid.push_back({-1.0, c});
    }
  }
  constexpr int kRes = 13;
  for (int axis = 0; axis < 4; ++axis)
    for (int i = 0; i < kRes * kRes * kRes; ++i) {
      Eigen::VectorXd c(4);
      int rest = i;
      for (int k = 0; k < 4; ++k) {
        if (k == axis) {
          c(k) = 1.0;
          continue;
        }
        c(k) = -1.0 + 2.0 * (rest % kRes) / (kRes - 1);
        rest /= kRes;
      }
      c.normalize();
      f(c, r);
      grid.push_back({r.squaredNorm(), c});
    }
  const std::size_t starts = std::min<std::size_t>(16, grid.size());
  std::partial_sort(grid.begin(), grid.begin() + starts, grid.end(),
                    [](const auto& a, const auto& b) { return a.first < b.first; });

  Eigen::VectorXd best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < starts; ++k) {
    Eigen::VectorXd c = grid[k].second;
    Eigen::NumericalDiff<SelfCalibration> nd(f);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<SelfCalibration>> lm(nd);
    lm.parameters.xtol = 1e-15;
    lm.parameters.ftol = 1e-15;
    lm.parameters.maxfev = 4000;
    lm.minimize(c);
    f(c, r);
    const double cost = r.squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best = c;
    }
    if (best_cost < 1e-24) break;
  }
  if (best_cost > 1e-6)
    spdlog::warn("four-seed alignment left camera skew/aspect residual {:.3e}", best_cost);
  return f.transform(best);
}

}  // namespace

GaugeSolution solve_gauge(const CorrespondenceSet& corr, const std::vector<int>& required,
                          int iters, const WpfcOptions& opts) {
  GaugeSolution sol = solve_block(corr, required, iters, opts);
  expand_solution(corr, sol.group, sol.point_solved, sol.camera_solved);
  fill_unsolved(sol.group, sol.point_solved, sol.camera_solved);
  return sol;
}

Mat4 metric_alignment(const GaugeSolution& sol, const std::map<int, Vec3>& seeds,
                      const CorrespondenceSet& corr) {
  std::vector<Vec3> src, dst;
  for (const auto& [m, X] : seeds) {
    if (m < 0 || m >= sol.group.M() || !sol.point_solved[m])
      throw Error(ErrorCode::InsufficientCovisibility, "seed point was not solved");
    src.push_back(sol.group.points[m]);
    dst.push_back(X);
  }
  if (src.size() < 4) throw Error(ErrorCode::InvalidArgument, "need at least four metric seeds");
  if (src.size() >= 5) return fit_projective_transform(src, dst);
  std::vector<Mat34> cams;
  std::vector<Vec2> pps;
  for (int n = 0; n < sol.group.N(); ++n) {
    if (!sol.camera_solved[n]) continue;
    cams.push_back(sol.group.cameras[n]);
    // Principal point guess: the image centre, else the centroid of the observations.
    if (n < int(corr.images.size()) && corr.images[n].width > 0 && corr.images[n].height > 0) {
      pps.push_back(0.5 * Vec2(corr.images[n].width, corr.images[n].height));
    } else {
      Vec2 c = Vec2::Zero();
      int k = 0;
      for (int m = 0; m < corr.M(); ++m)
        if (corr.visible(m, n)) {
          c += corr.at(m, n);
          ++k;
        }
      pps.push_back(k > 0 ? Vec2(c / k) : Vec2::Zero());
    }
  }
  std::vector<Vec3> cloud;
  for (int m = 0; m < sol.group.M(); ++m)
    if (sol.point_solved[m]) cloud.push_back(sol.group.points[m]);
  return four_seed_alignment(src, dst, cams, pps, cloud);
}

SolutionGroup seed_and_solve(const CorrespondenceSet& corr, const std::map<int, Vec3>& seeds,
                             int iters, const WpfcOptions& opts, GaugeSolution* gauge) {
  std::vector<int> required;
  for (const auto& [m, X] : seeds) required.push_back(m);
  GaugeSolution sol = solve_block(corr, required, iters, opts);
  if (gauge) *gauge = sol;
  const Mat4 T = metric_alignment(sol, seeds, corr);

  SolutionGroup g;
  g.points.assign(corr.M(), Vec3::Zero());
  g.cameras.assign(corr.N(), Mat34::Zero());
  Eigen::FullPivLU<Mat4> lu(T);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularSystem, "metric alignment is singular");
  const Mat4 Ti = lu.inverse();
  for (int m = 0; m < corr.M(); ++m)
    if (sol.point_solved[m]) g.points[m] = transform_point(T, sol.group.points[m]);
  for (int n = 0; n < corr.N(); ++n)
    if (sol.camera_solved[n]) g.cameras[n] = normalize_camera(sol.group.cameras[n] * Ti);
  std::vector<bool> ps = sol.point_solved, cs = sol.camera_solved;
  expand_solution(corr, g, ps, cs);
  fill_unsolved(g, ps, cs);
  if (gauge) {
    gauge->point_solved = ps;
    gauge->camera_solved = cs;
  }
  return g;
}

namespace {

// Uniform grid over points for radius queries.
class SpatialHash {
 public:
  explicit SpatialHash(double cell) : cell_(cell) {}

  void insert(int id, const Vec3& X) { cells_[key(cell_of(X))].push_back({id, X}); }

  template <typename F>
  void for_each_near(const Vec3& X, F&& f) const {
    const Eigen::Vector3i c = cell_of(X);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          const auto it = cells_.find(key(c + Eigen::Vector3i(dx, dy, dz)));
          if (it == cells_.end()) continue;
          for (const auto& [id, Y] : it->second) f(id, Y);
        }
  }

 private:
  Eigen::Vector3i cell_of(const Vec3& X) const {
    return (X / cell_).array().floor().cast<int>();
  }
  static std::uint64_t key(const Eigen::Vector3i& c) {
    auto u = [](int v) { return std::uint64_t(std::uint32_t(v)) & 0x1fffffu; };
    return (u(c.x()) << 42) | (u(c.y()) << 21) | u(c.z());
  }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::pair<int, Vec3>>> cells_;
};

std::vector<int> spread_indices(const PointCloud& cloud, std::vector<int> ids, double delta) {
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    return cloud[a].e_d < cloud[b].e_d || (cloud[a].e_d == cloud[b].e_d && a < b);
  });
  SpatialHash hash(delta);
  std::vector<int> kept;
  for (int i : ids) {
    const Vec3& X = cloud[i].position;
    bool ok = true;
    hash.for_each_near(X, [&](int, const Vec3& Y) {
      if ((X - Y).norm() < delta) ok = false;
    });
    if (!ok) continue;
    kept.push_back(i);
    hash.insert(i, X);
  }
  return kept;
}

}  // namespace

PointCloud select_best_spread(const PointCloud& cloud, double delta) {
  if (!(delta > 0)) throw Error(ErrorCode::InvalidArgument, "spread distance must be positive");
  std::vector<int> ids(cloud.size());
  std::iota(ids.begin(), ids.end(), 0);
  PointCloud out;
  for (int i : spread_indices(cloud, ids, delta)) out.push_back(cloud[i]);
  return out;
}

PointCloud seed_cloud(const SolutionGroup& group, const CorrespondenceSet& corr) {
  PointCloud out;
  for (int m = 0; m < group.M() && m < corr.M(); ++m) {
    if (!group.points[m].allFinite()) continue;
    CloudPoint p;
    p.position = group.points[m];
    double sum = 0;
    for (int n = 0; n < group.N() && n < corr.N(); ++n) {
      if (!corr.visible(m, n) || !group.cameras[n].allFinite()) continue;
      try {
        sum += (project(group.cameras[n], p.position) - corr.at(m, n)).norm();
        p.views.push_back(n);
      } catch (const Error&) {
      }
    }
    p.e_i = int(p.views.size());
    p.e_d = p.e_i > 0 ? sum / p.e_i : 0.0;
    p.anchor_a = p.anchor_b = m;
    out.push_back(std::move(p));
  }
  return out;
}

PointCloud grow_point_cloud(const SolutionGroup& group, const CorrespondenceSet& corr,
                            const std::vector<GrayImage>& images, const GrowthConfig& cfg,
                            GrowthStats* stats) {
  if (!(cfg.theta > 0 && cfg.theta < 1) || !(cfg.tau_d > 0) || cfg.tau_i < 2)
    throw Error(ErrorCode::InvalidArgument, "growth needs theta in (0,1), tau_d > 0, tau_i >= 2");
  GrowthStats st;
  PointCloud cloud = seed_cloud(group, corr);
  std::vector<int> seeds(cloud.size());
  std::iota(seeds.begin(), seeds.end(), 0);

  const int N = int(std::min<std::size_t>(group.cameras.size(), images.size()));
  std::vector<bool> cam_ok(N);
  for (int n = 0; n < N; ++n) cam_ok[n] = group.cameras[n].allFinite();

  CrpcOptions co;
  co.theta = cfg.theta;
  co.ell_frac = cfg.ell_frac;
  co.tau_d = cfg.tau_d;
  co.tau_i = cfg.tau_i;
  co.centered = cfg.centered;

  for (int level = 1; level <= cfg.max_levels; ++level) {
    st.seeds_per_level.push_back(seeds.size());
    // Candidate anchor pairs, shortest first.
    std::set<std::pair<int, int>> pair_set;
    const int S = int(seeds.size());
    for (int x = 0; x < S; ++x) {
      std::vector<std::pair<double, int>> near;
      for (int y = 0; y < S; ++y)
        if (y != x)
          near.push_back({(cloud[seeds[x]].position - cloud[seeds[y]].position).norm(), y});
      std::sort(near.begin(), near.end());
      const int lim = cfg.neighbor_limit > 0 ? std::min<int>(cfg.neighbor_limit, int(near.size()))
                                             : int(near.size());
      for (int k = 0; k < lim; ++k)
        pair_set.insert({std::min(seeds[x], seeds[near[k].second]),
                         std::max(seeds[x], seeds[near[k].second])});
    }
    std::vector<std::pair<int, int>> pairs(pair_set.begin(), pair_set.end());
    std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& p, const auto& q) {
      return (cloud[p.first].position - cloud[p.second].position).norm() <
             (cloud[q.first].position - cloud[q.second].position).norm();
    });
    if (cfg.max_pairs_per_level > 0 && pairs.size() > cfg.max_pairs_per_level)
      pairs.resize(cfg.max_pairs_per_level);
    st.pairs_per_level.push_back(pairs.size());

    std::vector<int> fresh;
    for (const auto& [a, b] : pairs) {
      co.image_mask.assign(N, false);
      int shared = 0;
      for (int n : cloud[a].views)
        if (n < N && cam_ok[n] &&
            std::find(cloud[b].views.begin(), cloud[b].views.end(), n) != cloud[b].views.end()) {
          co.image_mask[n] = true;
          ++shared;
        }
      if (shared < std::max(2, cfg.tau_i)) continue;
      const PointCloud pc = crpc(group.cameras, images, cloud[a].position, cloud[b].position, co);
      for (const auto& p : pc) {
        CloudPoint q = p;
        q.anchor_a = a;
        q.anchor_b = b;
        q.level = level;
        fresh.push_back(int(cloud.size()));
        cloud.push_back(std::move(q));
      }
    }
    st.points_per_level.push_back(fresh.size());
    spdlog::info("level {}: {} seeds, {} pairs, {} new points", level, seeds.size(), pairs.size(),
                 fresh.size());
    if (fresh.empty()) break;
    const double delta = cfg.spread.empty()
                             ? 0.5
                             : cfg.spread[std::min<std::size_t>(level - 1, cfg.spread.size() - 1)];
    std::vector<int> pool = seeds;
    pool.insert(pool.end(), fresh.begin(), fresh.end());
    seeds = spread_indices(cloud, pool, delta);
  }
  if (stats) *stats = st;
  return cloud;
}

PointCloud refine_by_distance(const PointCloud& pc, double delta) {
  if (!(delta > 0)) throw Error(ErrorCode::InvalidArgument, "refinement distance must be positive");
  SpatialHash hash(delta);
  for (std::size_t i = 0; i < pc.size(); ++i) hash.insert(int(i), pc[i].position);
  PointCloud out;
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const Vec3& X = pc[i].position;
    bool minimal = true;
    hash.for_each_near(X, [&](int j, const Vec3& Y) {
      if (j == int(i) || (X - Y).norm() > delta) return;
      if (pc[j].e_d < pc[i].e_d || (pc[j].e_d == pc[i].e_d && j < int(i))) minimal = false;
    });
    if (minimal) out.push_back(pc[i]);
  }
  return out;
}

PointCloud refine_by_pixel(const PointCloud& pc, double epsilon) {
  PointCloud out;
  for (const auto& p : pc)
    if (p.e_d <= epsilon) out.push_back(p);
  return out;
}

}  // namespace geocloud
