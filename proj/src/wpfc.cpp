#include "geocloud/wpfc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

namespace geocloud {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct AnchorImage {
  Vec2 x[5];
  double xi235, xi245, xi345, xi135, xi145;
};

AnchorImage anchor_image(const CorrespondenceSet& corr, const Anchors& a, int n) {
  AnchorImage ai;
  for (int i = 0; i < 5; ++i) ai.x[i] = corr.at(a[i], n);
  const Vec2 *x1 = &ai.x[0], *x2 = &ai.x[1], *x3 = &ai.x[2], *x4 = &ai.x[3], *x5 = &ai.x[4];
  ai.xi235 = xi(*x2, *x3, *x5);
  ai.xi245 = xi(*x2, *x4, *x5);
  ai.xi345 = xi(*x3, *x4, *x5);
  ai.xi135 = xi(*x1, *x3, *x5);
  ai.xi145 = xi(*x1, *x4, *x5);
  const double scale = (*x3 - *x5).norm() * (*x4 - *x5).norm();
  if (!(std::abs(ai.xi345) > tolerances().rank * scale))
    throw Error(ErrorCode::DegenerateXi,
                "anchors 3, 4, 5 are collinear in image " + std::to_string(n));
  return ai;
}

bool is_anchor(const Anchors& a, int m) { return std::find(a.begin(), a.end(), m) != a.end(); }

}  // namespace

LambdaMatrix build_lambda(const CorrespondenceSet& corr, const Anchors& a, int m) {
  LambdaMatrix L(corr.N(), 5);
  for (int n = 0; n < corr.N(); ++n) {
    const Vec2& x1 = corr.at(a[0], n);
    const Vec2& x2 = corr.at(a[1], n);
    const Vec2& x3 = corr.at(a[2], n);
    const Vec2& x4 = corr.at(a[3], n);
    const Vec2& x5 = corr.at(a[4], n);
    const Vec2& xm = corr.at(m, n);
    L(n, 0) = xi(x3, x4, x5) * xi(x1, x2, xm);
    L(n, 1) = xi(x4, x2, x5) * xi(x1, x3, xm);
    L(n, 2) = xi(x2, x3, x5) * xi(x1, x4, xm);
    L(n, 3) = xi(x1, x2, x5) * xi(x3, x4, xm);
    L(n, 4) = xi(x1, x3, x5) * xi(x4, x2, xm);
  }
  return L;
}

std::pair<QuinticCoefficients, Vec3> world_point_from_lambda(const LambdaMatrix& L) {
  if (L.rows() < 5) throw Error(ErrorCode::InvalidArgument, "need at least five images");
  const NullVector nv = null_vector(L);
  if (nv.second_smallest < tolerances().rank)
    throw Error(ErrorCode::RankDeficient, "lambda matrix has a multi-dimensional null space");
  const Eigen::VectorXd& e = nv.v;
  const double e1 = e(0), e2 = e(1), e4 = e(3), e5 = e(4);
  QuinticCoefficients q;
  q.f = (2 * e2 * e5 + 2 * e1 * e4 - 3 * e1 * e2 - e4 * e5) * (e1 + e4 - e2 - e5) +
        (e2 - e1) * (e5 - e1) * (e2 - e4);
  q.fx = (e1 - e5) * (e5 - e4) * (e2 - e4);
  q.fy = (e2 * e5 - e1 * e4) * (e2 - e4);
  q.fz = (e2 * e5 - e1 * e4) * (e1 - e5);
  if (!(std::abs(q.f) > tolerances().rank))
    throw Error(ErrorCode::PointAtInfinity, "quintic denominator vanishes");
  return {q, Vec3(q.fx / q.f, q.fy / q.f, q.fz / q.f)};
}

Eigen::Matrix<double, 5, 1> quintic_vector(const Vec3& X) {
  const double x = X.x(), y = X.y(), z = X.z();
  const double w = 1 - x - y - z;
  Eigen::Matrix<double, 5, 1> v;
  v << z * w + 2 * y * z, y * w + 2 * y * z, x * w + 2 * y * z, -2 * x * y + 2 * y * z,
      -2 * x * z + 2 * y * z;
  return v;
}

Mat34 assemble_camera(const CorrespondenceSet& corr, const Anchors& anchors, int n, double alpha) {
  const AnchorImage ai = anchor_image(corr, anchors, n);
  const double beta = (2 * ai.xi145 - ai.xi245 * alpha) / ai.xi345;
  const double gamma = (ai.xi235 * alpha - 2 * ai.xi135) / ai.xi345;
  Mat34 Q;
  Q.col(0) = ai.x[3].homogeneous();
  Q.col(1) = ai.x[2].homogeneous();
  Q.col(2) = ai.x[1].homogeneous();
  Q.col(3) = ai.x[0].homogeneous();
  Mat4 D;
  D << gamma, 0, 0, 0, 0, beta, 0, 0, 0, 0, alpha, 0, -1, -1, -1, 1;
  Mat34 P = Q * D;
  P(2, 3) = 1.0;
  return P;
}

Mat34 recover_projection(const CorrespondenceSet& corr, const Anchors& a,
                         const std::vector<std::pair<int, QuinticCoefficients>>& coeffs, int n,
                         double* alpha_out) {
  if (coeffs.empty()) throw Error(ErrorCode::InvalidArgument, "no non-anchor point available");
  const AnchorImage ai = anchor_image(corr, a, n);
  const Vec2 &x1 = ai.x[0], &x2 = ai.x[1], &x3 = ai.x[2], &x4 = ai.x[3];
  double saa = 0, sab = 0;
  for (const auto& [m, q] : coeffs) {
    const Vec2& xm = corr.at(m, n);
    const double A = q.fy * xi(x3, x4, xm) * ai.xi245 - q.fz * xi(x2, x4, xm) * ai.xi345;
    const double B = (q.fx + q.fy + q.fz - q.f) * xi(x1, x4, xm) * ai.xi345 -
                     2 * q.fy * xi(x3, x4, xm) * ai.xi145;
    saa += A * A;
    sab += A * B;
  }
  if (!(saa > 0)) throw Error(ErrorCode::SingularSystem, "alpha is undetermined");
  const double alpha = -sab / saa;
  if (alpha_out) *alpha_out = alpha;
  return assemble_camera(corr, a, n, alpha);
}

AlphaSolveInputs alpha_inputs(const CorrespondenceSet& corr, const Anchors& a, int m,
                              const QuinticCoefficients& q, int n) {
  const AnchorImage ai = anchor_image(corr, a, n);
  const Vec2& x6 = corr.at(m, n);
  const double s = q.f - q.fx - q.fy - q.fz;
  AlphaSolveInputs in;
  auto lin = [&](int k, double& c1, double& c2) {
    const double d1 = ai.x[0](k) - x6(k), d2 = ai.x[1](k) - x6(k);
    const double d3 = ai.x[2](k) - x6(k), d4 = ai.x[3](k) - x6(k);
    c1 = ai.xi235 * q.fx * d4 - ai.xi245 * q.fy * d3 + ai.xi345 * q.fz * d2;
    c2 = -2 * ai.xi135 * q.fx * d4 + 2 * ai.xi145 * q.fy * d3 + ai.xi345 * s * d1;
  };
  lin(0, in.a1, in.a2);
  lin(1, in.b1, in.b2);
  in.c1 = ai.xi235 * q.fx - ai.xi245 * q.fy + ai.xi345 * q.fz;
  in.c2 = -2 * ai.xi135 * q.fx + 2 * ai.xi145 * q.fy + ai.xi345 * s;
  const double s11 = in.a1 * in.a1 + in.b1 * in.b1;
  const double s12 = in.a1 * in.a2 + in.b1 * in.b2;
  const double s22 = in.a2 * in.a2 + in.b2 * in.b2;
  const double qa = s11 * in.c1 * in.c2 - s12 * in.c1 * in.c1;
  const double qb = s11 * in.c2 * in.c2 - s22 * in.c1 * in.c1;
  const double qc = s12 * in.c2 * in.c2 - s22 * in.c1 * in.c2;
  in.delta = qb * qb - 4 * qa * qc;
  return in;
}

std::vector<double> alpha_closed_form_6(const AlphaSolveInputs& in) {
  const double s11 = in.a1 * in.a1 + in.b1 * in.b1;
  const double s12 = in.a1 * in.a2 + in.b1 * in.b2;
  const double s22 = in.a2 * in.a2 + in.b2 * in.b2;
  const double qa = s11 * in.c1 * in.c2 - s12 * in.c1 * in.c1;
  const double qb = s11 * in.c2 * in.c2 - s22 * in.c1 * in.c1;
  const double scale = std::abs(s11 * in.c2 * in.c2) + std::abs(s12 * in.c1 * in.c2) +
                       std::abs(s22 * in.c1 * in.c1);
  std::vector<double> out;
  if (scale > 0 && std::abs(qa) > 1e-14 * scale) {
    const double disc_tol = 1e-12 * scale * scale;
    if (in.delta > disc_tol) {
      const double r = std::sqrt(in.delta);
      out.push_back((-qb + r) / (2 * qa));
      out.push_back((-qb - r) / (2 * qa));
      return out;
    }
    if (in.delta >= -disc_tol) {
      out.push_back(-qb / (2 * qa));
      return out;
    }
  }
  if (in.a1 != 0) out.push_back(-in.a2 / in.a1);
  if (in.b1 != 0) out.push_back(-in.b2 / in.b1);
  if (s11 != 0) out.push_back(-s12 / s11);
  if (out.empty()) throw Error(ErrorCode::AllDenominatorsZero, "no alpha candidate is defined");
  return out;
}

double alpha_residual(const AlphaSolveInputs& in, double alpha) {
  const double c = in.c1 * alpha + in.c2;
  if (c == 0) return kInf;
  const double du = (in.a1 * alpha + in.a2) / c;
  const double dv = (in.b1 * alpha + in.b2) / c;
  return du * du + dv * dv;
}

double image_objective(const SolutionGroup& g, const CorrespondenceSet& corr, int n) {
  double s = 0;
  for (int m = 0; m < corr.M(); ++m)
    if (corr.visible(m, n)) s += (project(g.cameras[n], g.points[m]) - corr.at(m, n)).squaredNorm();
  return s;
}

double objective(const SolutionGroup& g, const CorrespondenceSet& corr) {
  if (g.M() != corr.M() || g.N() != corr.N())
    throw Error(ErrorCode::DimensionMismatch, "group and correspondences differ in size");
  double s = 0;
  for (int n = 0; n < corr.N(); ++n) s += image_objective(g, corr, n);
  return s;
}

namespace {

double camera_residual(const Mat34& P, const std::vector<Vec3>& pts, const CorrespondenceSet& corr,
                       int n) {
  double s = 0;
  for (int m = 0; m < corr.M(); ++m) {
    const Vec3 h = P * pts[m].homogeneous();
    if (std::abs(h.z()) < tolerances().depth) return kInf;
    s += (h.hnormalized() - corr.at(m, n)).squaredNorm();
  }
  return s;
}

}  // namespace

SolutionGroup solve_with_anchors(const CorrespondenceSet& corr, const Anchors& a) {
  SolutionGroup g;
  g.anchors = a;
  g.points.assign(corr.M(), Vec3::Zero());
  for (int i = 0; i < 5; ++i) g.points[a[i]] = canonical_gauge()[i];
  std::vector<std::pair<int, QuinticCoefficients>> coeffs;
  for (int m = 0; m < corr.M(); ++m) {
    if (is_anchor(a, m)) continue;
    auto [q, X] = world_point_from_lambda(build_lambda(corr, a, m));
    g.points[m] = X;
    coeffs.emplace_back(m, q);
  }
  g.cameras.resize(corr.N());
  for (int n = 0; n < corr.N(); ++n) {
    // Candidates: the least-squares alpha plus the sixth-point optimum for every free point.
    double alpha_ls = 0;
    Mat34 best = recover_projection(corr, a, coeffs, n, &alpha_ls);
    double best_res = camera_residual(best, g.points, corr, n);
    for (const auto& [m, q] : coeffs) {
      std::vector<double> cands;
      try {
        cands = alpha_closed_form_6(alpha_inputs(corr, a, m, q, n));
      } catch (const Error&) {
        continue;
      }
      for (double alpha : cands) {
        if (!std::isfinite(alpha)) continue;
        const Mat34 P = assemble_camera(corr, a, n, alpha);
        const double r = camera_residual(P, g.points, corr, n);
        if (r < best_res) {
          best_res = r;
          best = P;
        }
      }
    }
    if (!std::isfinite(best_res))
      throw Error(ErrorCode::DepthNearZero, "no finite camera for image " + std::to_string(n));
    g.cameras[n] = best;
  }
  return g;
}

namespace {

std::vector<Anchors> all_subsets(int M) {
  std::vector<Anchors> out;
  Anchors s{0, 1, 2, 3, 4};
  while (true) {
    out.push_back(s);
    int i = 4;
    while (i >= 0 && s[i] == M - 5 + i) --i;
    if (i < 0) break;
    ++s[i];
    for (int j = i + 1; j < 5; ++j) s[j] = s[j - 1] + 1;
  }
  return out;
}

// Greedy farthest-point choice using image distances summed over all views.
Anchors spread_subset(const CorrespondenceSet& corr) {
  const int M = corr.M();
  auto dist = [&](int i, int j) {
    double d = 0;
    for (int n = 0; n < corr.N(); ++n) d += (corr.at(i, n) - corr.at(j, n)).norm();
    return d;
  };
  std::vector<int> chosen;
  std::vector<double> centroid_dist(M, 0.0);
  for (int n = 0; n < corr.N(); ++n) {
    Vec2 c = Vec2::Zero();
    for (int m = 0; m < M; ++m) c += corr.at(m, n);
    c /= M;
    for (int m = 0; m < M; ++m) centroid_dist[m] += (corr.at(m, n) - c).norm();
  }
  chosen.push_back(int(std::max_element(centroid_dist.begin(), centroid_dist.end()) -
                       centroid_dist.begin()));
  while (chosen.size() < 5) {
    int best = -1;
    double best_d = -1;
    for (int m = 0; m < M; ++m) {
      if (std::find(chosen.begin(), chosen.end(), m) != chosen.end()) continue;
      double d = kInf;
      for (int c : chosen) d = std::min(d, dist(m, c));
      if (d > best_d) {
        best_d = d;
        best = m;
      }
    }
    chosen.push_back(best);
  }
  std::sort(chosen.begin(), chosen.end());
  return {chosen[0], chosen[1], chosen[2], chosen[3], chosen[4]};
}

std::vector<Anchors> candidate_subsets(const CorrespondenceSet& corr, const WpfcOptions& opts) {
  const int M = corr.M();
  if (M <= opts.exhaustive_max_points) return all_subsets(M);
  std::set<Anchors> seen;
  std::vector<Anchors> out;
  const Anchors spread = spread_subset(corr);
  seen.insert(spread);
  out.push_back(spread);
  std::mt19937_64 rng(opts.seed);
  std::vector<int> idx(M);
  const int budget = opts.subset_budget;
  for (int attempt = 0; int(out.size()) < budget + 1 && attempt < 20 * budget; ++attempt) {
    for (int i = 0; i < M; ++i) idx[i] = i;
    for (int i = 0; i < 5; ++i) {
      std::uniform_int_distribution<int> pick(i, M - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    Anchors s{idx[0], idx[1], idx[2], idx[3], idx[4]};
    std::sort(s.begin(), s.end());
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

}  // namespace

SolutionGroup cf_wpfc(const CorrespondenceSet& corr, const WpfcOptions& opts,
                      WpfcDiagnostics* diag) {
  if (corr.M() < 6 || corr.N() < 5)
    throw Error(ErrorCode::NoValidSubset, "closed form needs at least 6 points and 5 images");
  if (!corr.fully_visible())
    throw Error(ErrorCode::MissingObservation, "closed form needs a fully visible block");
  SolutionGroup best;
  double best_obj = kInf;
  int evaluated = 0, degenerate = 0;
  for (const Anchors& a : candidate_subsets(corr, opts)) {
    ++evaluated;
    try {
      SolutionGroup g = solve_with_anchors(corr, a);
      const double obj = objective(g, corr);
      if (!std::isfinite(obj)) {
        ++degenerate;
        continue;
      }
      if (obj < best_obj) {
        best_obj = obj;
        best = std::move(g);
      }
    } catch (const Error&) {
      ++degenerate;
    }
  }
  if (diag) {
    diag->subsets_evaluated += evaluated;
    diag->subsets_degenerate += degenerate;
  }
  if (!std::isfinite(best_obj))
    throw Error(ErrorCode::NoValidSubset, "every anchor subset is degenerate");
  return best;
}

Orientation2d absolute_orientation_2d(const std::vector<Vec2>& src, const std::vector<Vec2>& dst) {
  if (src.size() < 2 || src.size() != dst.size())
    throw Error(ErrorCode::InvalidArgument, "need >= 2 matching points");
  Vec2 cs = Vec2::Zero(), cd = Vec2::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= double(src.size());
  cd /= double(dst.size());
  double saa = 0, sbb = 0, dot = 0, cross = 0, rdot = 0, rcross = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec2 a = src[i] - cs, b = dst[i] - cd;
    saa += a.squaredNorm();
    sbb += b.squaredNorm();
    dot += a.dot(b);
    cross += a.x() * b.y() - a.y() * b.x();
    rdot += b.x() * a.x() - b.y() * a.y();
    rcross += b.x() * a.y() + b.y() * a.x();
  }
  if (!(saa > 0)) throw Error(ErrorCode::DegenerateSet, "all source points coincide");
  // Rotation by theta gains cos(theta) dot + sin(theta) cross; the reflection
  // [[c, s], [s, -c]] gains c rdot + s rcross.
  const double rot_gain = std::hypot(dot, cross);
  const double ref_gain = std::hypot(rdot, rcross);
  Orientation2d o;
  if (ref_gain > rot_gain) {
    const double th = std::atan2(rcross, rdot);
    o.R << std::cos(th), std::sin(th), std::sin(th), -std::cos(th);
    o.reflection = true;
  } else {
    const double th = std::atan2(cross, dot);
    o.R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  }
  o.t = cd - o.R * cs;
  o.residual = std::max(0.0, saa + sbb - 2 * std::max(rot_gain, ref_gain));
  return o;
}

Mat34 orientation_update(const Mat34& P, const Mat2& R, const Vec2& t) {
  if ((R.transpose() * R - Mat2::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw Error(ErrorCode::NotOrthogonal, "R is not orthogonal");
  Mat3 A = Mat3::Identity();
  A.topLeftCorner<2, 2>() = R;
  A.topRightCorner<2, 1>() = t;
  Mat34 out = A * P;
  out.row(2) = P.row(2);
  return out;
}

SolutionGroup wpfc_iterative(const CorrespondenceSet& corr, int iters, const WpfcOptions& opts,
                             WpfcDiagnostics* diag) {
  WpfcDiagnostics local;
  WpfcDiagnostics& d = diag ? *diag : local;
  SolutionGroup cur = cf_wpfc(corr, opts, &d);
  SolutionGroup best = cur;
  double best_obj = objective(cur, corr);
  d.objective_history.push_back(best_obj);
  const int M = corr.M(), N = corr.N();
  // Changes below this floor are rounding noise of an essentially exact fit.
  double obs_energy = 0;
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < N; ++n) obs_energy += corr.at(m, n).squaredNorm();
  const double floor = 1e-20 * obs_energy;
  for (int it = 0; it < iters; ++it) {
    CorrespondenceSet blended(M, N);
    blended.images = corr.images;
    SolutionGroup rotated = cur;
    for (int n = 0; n < N; ++n) {
      std::vector<Vec2> reproj(M), given(M);
      for (int m = 0; m < M; ++m) {
        reproj[m] = project(cur.cameras[n], cur.points[m]);
        given[m] = corr.at(m, n);
      }
      const Orientation2d o = absolute_orientation_2d(reproj, given);
      rotated.cameras[n] = orientation_update(cur.cameras[n], o.R, o.t);
      for (int m = 0; m < M; ++m) blended.set(m, n, 0.5 * ((o.R * reproj[m] + o.t) + given[m]));
    }
    const double cur_obj = objective(cur, corr);
    const double rotated_obj = objective(rotated, corr);
    if (rotated_obj > cur_obj * (1 + 1e-12) + floor) {
      ++d.descent_violations;
      spdlog::warn("orientation update increased the objective: {} -> {}", cur_obj, rotated_obj);
    }
    SolutionGroup next;
    try {
      next = cf_wpfc(blended, opts, &d);
    } catch (const Error& e) {
      spdlog::warn("iteration {} stopped: {}", it, e.what());
      break;
    }
    const double next_obj = objective(next, corr);
    if (next_obj > rotated_obj) {
      ++d.fact_violations;
      spdlog::debug("iteration {}: blended re-solve {} did not beat rotated cameras {}", it, next_obj,
                    rotated_obj);
    }
    if (next_obj < best_obj) {
      best_obj = next_obj;
      best = next;
    }
    d.objective_history.push_back(best_obj);
    cur = std::move(next);
  }
  return best;
}

}  // namespace geocloud
