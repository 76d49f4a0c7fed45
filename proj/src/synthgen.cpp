#include "geocloud/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace geocloud {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = splitmix(seed ^ splitmix(std::uint64_t(x) ^ splitmix(std::uint64_t(y) ^
                                                                        splitmix(std::uint64_t(z)))));
  return double(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

// Smooth value noise in [0, 1] with unit lattice spacing.
double value_noise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto ix = std::int64_t(fx), iy = std::int64_t(fy), iz = std::int64_t(fz);
  const double tx = fade(p.x() - fx), ty = fade(p.y() - fy), tz = fade(p.z() - fz);
  double c[2][2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int d = 0; d < 2; ++d) c[a][b][d] = lattice(ix + a, iy + b, iz + d, seed);
  auto lerp = [](double u, double v, double t) { return u + (v - u) * t; };
  const double x00 = lerp(c[0][0][0], c[1][0][0], tx), x10 = lerp(c[0][1][0], c[1][1][0], tx);
  const double x01 = lerp(c[0][0][1], c[1][0][1], tx), x11 = lerp(c[0][1][1], c[1][1][1], tx);
  return lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz);
}

// Three octaves of value noise, rescaled to roughly [-1, 1].
double fbm(const Vec3& p, std::uint64_t seed) {
  double sum = 0, amp = 1, norm = 0, freq = 1;
  for (int o = 0; o < 3; ++o) {
    sum += amp * value_noise(p * freq, seed + 7919 * o);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return 2.0 * (sum / norm) - 1.0;
}

double scene_radius(const SceneSpec& s) {
  switch (s.surface) {
    case SurfaceKind::Volume: return std::sqrt(3.0) * s.radius;
    case SurfaceKind::Cylinder: return std::max(s.radius, 0.5 * s.height);
    case SurfaceKind::Plane: return std::sqrt(2.0) * s.radius;
    case SurfaceKind::Sphere: return s.radius;
  }
  return s.radius;
}

Mat34 look_at(const Vec3& C, const Vec3& target, double f, int W, int H) {
  const Vec3 z = (target - C).normalized();
  const Vec3 down(0, -1, 0);
  const Vec3 x = down.cross(z).normalized();
  const Vec3 y = z.cross(x);
  Mat3 R;
  R.row(0) = x;
  R.row(1) = y;
  R.row(2) = z;
  Mat3 K;
  K << f, 0, 0.5 * W, 0, f, 0.5 * H, 0, 0, 1;
  Mat34 Rt;
  Rt.leftCols<3>() = R;
  Rt.col(3) = -R * C;
  return normalize_camera(K * Rt);
}

double min_quadruple_volume(const std::vector<Vec3>& p) {
  double best = std::numeric_limits<double>::infinity();
  for (int skip = 0; skip < 5; ++skip) {
    std::vector<Vec3> q;
    for (int i = 0; i < 5; ++i)
      if (i != skip) q.push_back(p[i]);
    Mat3 A;
    A.col(0) = q[1] - q[0];
    A.col(1) = q[2] - q[0];
    A.col(2) = q[3] - q[0];
    best = std::min(best, std::abs(A.determinant()));
  }
  return best;
}

}  // namespace

SurfaceKind surface_kind_from_string(const std::string& s) {
  if (s == "volume") return SurfaceKind::Volume;
  if (s == "plane") return SurfaceKind::Plane;
  if (s == "cylinder") return SurfaceKind::Cylinder;
  if (s == "sphere") return SurfaceKind::Sphere;
  throw Error(ErrorCode::InvalidArgument, "unknown surface kind '" + s + "'");
}

std::string to_string(SurfaceKind k) {
  switch (k) {
    case SurfaceKind::Volume: return "volume";
    case SurfaceKind::Plane: return "plane";
    case SurfaceKind::Cylinder: return "cylinder";
    case SurfaceKind::Sphere: return "sphere";
  }
  return "volume";
}

std::optional<double> Surface::intersect(const Vec3& o, const Vec3& d) const {
  const Vec3 r = o - center;
  switch (kind) {
    case SurfaceKind::Volume: return std::nullopt;
    case SurfaceKind::Plane: {
      if (std::abs(d.z()) < 1e-15) return std::nullopt;
      const double t = -r.z() / d.z();
      const Vec3 h = r + t * d;
      if (t > 0 && std::abs(h.x()) <= radius && std::abs(h.y()) <= radius) return t;
      return std::nullopt;
    }
    case SurfaceKind::Cylinder: {
      const double a = d.x() * d.x() + d.z() * d.z();
      const double b = 2 * (r.x() * d.x() + r.z() * d.z());
      const double c = r.x() * r.x() + r.z() * r.z() - radius * radius;
      const double disc = b * b - 4 * a * c;
      if (a < 1e-15 || disc < 0) return std::nullopt;
      const double s = std::sqrt(disc);
      for (double t : {(-b - s) / (2 * a), (-b + s) / (2 * a)})
        if (t > 1e-9 && std::abs(r.y() + t * d.y()) <= 0.5 * height) return t;
      return std::nullopt;
    }
    case SurfaceKind::Sphere: {
      const double a = d.squaredNorm(), b = 2 * r.dot(d), c = r.squaredNorm() - radius * radius;
      const double disc = b * b - 4 * a * c;
      if (disc < 0) return std::nullopt;
      const double s = std::sqrt(disc);
      for (double t : {(-b - s) / (2 * a), (-b + s) / (2 * a)})
        if (t > 1e-9) return t;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

Vec3 Surface::normal(const Vec3& X) const {
  const Vec3 r = X - center;
  switch (kind) {
    case SurfaceKind::Plane: return Vec3(0, 0, 1);
    case SurfaceKind::Cylinder: return Vec3(r.x(), 0, r.z()).normalized();
    case SurfaceKind::Sphere: return r.normalized();
    case SurfaceKind::Volume: break;
  }
  return Vec3::Zero();
}

double Surface::distance(const Vec3& X) const {
  const Vec3 r = X - center;
  switch (kind) {
    case SurfaceKind::Volume: return 0.0;
    case SurfaceKind::Plane: {
      const double ox = std::max(0.0, std::abs(r.x()) - radius);
      const double oy = std::max(0.0, std::abs(r.y()) - radius);
      return std::sqrt(r.z() * r.z() + ox * ox + oy * oy);
    }
    case SurfaceKind::Cylinder: {
      const double radial = std::hypot(r.x(), r.z()) - radius;
      const double axial = std::max(0.0, std::abs(r.y()) - 0.5 * height);
      return std::hypot(radial, axial);
    }
    case SurfaceKind::Sphere: return std::abs(r.norm() - radius);
  }
  return 0.0;
}

double Surface::diameter() const {
  switch (kind) {
    case SurfaceKind::Volume: return 2 * std::sqrt(3.0) * radius;
    case SurfaceKind::Plane: return 2 * std::sqrt(2.0) * radius;
    case SurfaceKind::Cylinder: return std::hypot(2 * radius, height);
    case SurfaceKind::Sphere: return 2 * radius;
  }
  return 0.0;
}

double Texture::value(const Vec3& X) const {
  if (!enabled) return 0.5;
  for (const Vec3& m : marks) {
    const double d = (X - m).norm();
    if (d < mark_radius) return 0.03;
    if (d < 1.7 * mark_radius) return 0.97;
  }
  const double v = 0.5 + 2.0 * contrast * fbm(X / feature_size, seed);
  return std::clamp(v, 0.0, 1.0);
}

double SyntheticScene::diameter() const {
  if (surface.kind != SurfaceKind::Volume) return surface.diameter();
  double d = 0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) d = std::max(d, (points[i] - points[j]).norm());
  return d;
}

SolutionGroup SyntheticScene::group() const {
  SolutionGroup g;
  g.points = points;
  g.cameras = cameras;
  return g;
}

std::vector<Vec3> sample_surface_points(const SyntheticScene& scene, int count, std::uint64_t seed) {
  const SceneSpec& s = scene.spec;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const double half_arc = 0.5 * s.point_arc_deg * kPi / 180.0;
  std::vector<Vec3> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Vec3 p;
    switch (s.surface) {
      case SurfaceKind::Volume:
        p = Vec3(uni(rng), uni(rng), uni(rng)) * s.radius;
        break;
      case SurfaceKind::Plane:
        p = Vec3(uni(rng) * s.point_height_frac * s.radius, uni(rng) * s.point_height_frac * s.radius, 0);
        break;
      case SurfaceKind::Cylinder: {
        const double th = uni(rng) * half_arc;
        p = Vec3(s.radius * std::sin(th), uni(rng) * 0.5 * s.point_height_frac * s.height,
                 s.radius * std::cos(th));
        break;
      }
      case SurfaceKind::Sphere: {
        const double az = uni(rng) * half_arc;
        const double el = uni(rng) * half_arc * s.point_height_frac;
        p = s.radius * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
        break;
      }
    }
    out.push_back(scene.surface.center + p);
  }
  return out;
}

bool point_visible(const SyntheticScene& scene, const Vec3& X, int n) {
  const Vec3 h = scene.cameras[n] * X.homogeneous();
  if (h.z() <= 0) return false;
  const Vec2 x = h.hnormalized();
  const double margin = 2.0;
  if (x.x() < margin || x.x() > scene.width() - 1 - margin || x.y() < margin ||
      x.y() > scene.height() - 1 - margin)
    return false;
  if (scene.surface.kind == SurfaceKind::Volume) return true;
  const Vec3 view = scene.centers[n] - X;
  return scene.surface.normal(X).dot(view) > 0.15 * view.norm();
}

std::pair<SyntheticScene, CorrespondenceSet> make_scene(const SceneSpec& spec) {
  if (spec.M < 6 || spec.N < 5)
    throw Error(ErrorCode::InvalidArgument, "scenes need M >= 6 and N >= 5");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const double rs = scene_radius(spec);
  const double dist = spec.ring_distance * rs;
  const double f = 0.9 * 0.5 * std::min(spec.width, spec.height_px) * (dist - rs) / rs;

  for (int attempt = 0; attempt < 200; ++attempt) {
    SyntheticScene sc;
    sc.spec = spec;
    sc.surface.kind = spec.surface;
    sc.surface.radius = spec.radius;
    sc.surface.height = spec.height;

    sc.cameras.clear();
    sc.centers.clear();
    for (int n = 0; n < spec.N; ++n) {
      double phi;
      if (spec.arc_deg >= 360.0) {
        phi = 2 * kPi * (n + 0.25 * uni(rng)) / spec.N;
      } else {
        const double step = spec.N > 1 ? 1.0 / (spec.N - 1) : 0.0;
        phi = spec.arc_deg * kPi / 180.0 * ((n + 0.25 * uni(rng)) * step - 0.5);
      }
      const double elev = spec.elevation_jitter * dist * uni(rng);
      const Vec3 C(dist * std::sin(phi), elev, dist * std::cos(phi));
      const Vec3 target = 0.05 * rs * Vec3(uni(rng), uni(rng), uni(rng));
      sc.centers.push_back(C);
      sc.cameras.push_back(look_at(C, target, f, spec.width, spec.height_px));
    }
    sc.points = sample_surface_points(sc, spec.M, rng());
    // Planar point sets cannot be in general position; they serve rendering only.
    if (spec.surface != SurfaceKind::Plane && min_quadruple_volume(sc.points) < 1e-3 * std::pow(rs, 3))
      continue;

    sc.visible.assign(spec.M, std::vector<bool>(spec.N, false));
    bool ok = true;
    for (int m = 0; m < spec.M && ok; ++m) {
      int seen = 0;
      for (int n = 0; n < spec.N; ++n) {
        sc.visible[m][n] = point_visible(sc, sc.points[m], n);
        seen += sc.visible[m][n];
      }
      // Volume scenes feed the closed-form solver directly and must be fully covisible.
      ok = spec.surface == SurfaceKind::Volume ? seen == spec.N : seen >= 2;
    }
    if (!ok) continue;

    sc.texture.enabled = spec.textured;
    sc.texture.seed = splitmix(spec.seed ^ 0x7e47u);
    sc.texture.feature_size = spec.feature_size > 0 ? spec.feature_size : spec.radius / 30.0;
    sc.texture.mark_radius = spec.mark_radius > 0 ? spec.mark_radius : 0.6 * sc.texture.feature_size;
    if (spec.marks && spec.textured) sc.texture.marks = sc.points;

    CorrespondenceSet corr(spec.M, spec.N);
    corr.images.resize(spec.N);
    for (int n = 0; n < spec.N; ++n)
      corr.images[n] = ImageInfo{spec.width, spec.height_px, "image_" + std::to_string(n) + ".pgm"};
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int m = 0; m < spec.M; ++m)
      for (int n = 0; n < spec.N; ++n) {
        if (!sc.visible[m][n]) continue;
        Vec2 x = project(sc.cameras[n], sc.points[m]);
        if (spec.sigma > 0) {
          const double du = noise(rng), dv = noise(rng);
          x += spec.sigma * Vec2(du, dv);
        }
        corr.set(m, n, x);
      }
    return {std::move(sc), std::move(corr)};
  }
  throw Error(ErrorCode::GenerationFailed, "no generic scene found within the retry budget");
}

std::pair<SyntheticScene, CorrespondenceSet> make_scene(int M, int N, double sigma,
                                                        std::uint64_t seed) {
  SceneSpec s;
  s.M = M;
  s.N = N;
  s.sigma = sigma;
  s.seed = seed;
  return make_scene(s);
}

GrayImage render_image(const SyntheticScene& scene, int n) {
  const int W = scene.width(), H = scene.height();
  GrayImage img(H, W, 0.5f);
  const Mat34& P = scene.cameras[n];
  const Mat3 Minv = P.leftCols<3>().inverse();
  const Vec3 C = scene.centers[n];
  const std::uint64_t bg_seed = splitmix(scene.texture.seed + 1000003ULL * (n + 1));
  const double bg_scale = 6.0;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const Vec3 dir = Minv * Vec3(c, r, 1.0);
      const auto t = scene.surface.intersect(C, dir);
      double v;
      if (t) {
        v = scene.texture.value(C + *t * dir);
      } else if (scene.texture.enabled) {
        v = 0.5 + 0.3 * fbm(Vec3(c / bg_scale, r / bg_scale, 0.0), bg_seed);
      } else {
        v = 0.5;
      }
      img(r, c) = float(v);
    }
  }
  return img;
}

std::vector<GrayImage> render_textured_scene(const SyntheticScene& scene) {
  std::vector<GrayImage> out;
  out.reserve(scene.cameras.size());
  for (std::size_t n = 0; n < scene.cameras.size(); ++n) out.push_back(render_image(scene, int(n)));
  return out;
}

double gauge_residual(const SolutionGroup& est, const SyntheticScene& truth) {
  if (est.M() < 6 || est.M() != int(truth.points.size()))
    throw Error(ErrorCode::DimensionMismatch, "gauge residual needs matching groups of >= 6 points");
  std::vector<Vec3> src(est.points.begin(), est.points.begin() + 5);
  std::vector<Vec3> dst(truth.points.begin(), truth.points.begin() + 5);
  const Mat4 T = fit_projective_transform(src, dst);
  double diam = 0;
  for (std::size_t i = 0; i < truth.points.size(); ++i)
    for (std::size_t j = i + 1; j < truth.points.size(); ++j)
      diam = std::max(diam, (truth.points[i] - truth.points[j]).norm());
  double worst = 0;
  for (int m = 5; m < est.M(); ++m)
    worst = std::max(worst, (transform_point(T, est.points[m]) - truth.points[m]).norm());
  return worst / diam;
}

}  // namespace geocloud
