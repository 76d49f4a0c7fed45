#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geocloud/geometry.hpp"
#include "geocloud/image.hpp"

namespace geocloud {

enum class SurfaceKind { Volume, Plane, Cylinder, Sphere };

SurfaceKind surface_kind_from_string(const std::string& s);
std::string to_string(SurfaceKind k);

// Volume: points fill a cube of half side `radius`; nothing is rendered.
// Plane: square patch z = center.z of half side `radius`, facing +z.
// Cylinder: axis parallel to y through `center`, length `height`.
// Sphere: ball of `radius` around `center`.
struct Surface {
  SurfaceKind kind = SurfaceKind::Volume;
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  double height = 2.0;

  // Smallest positive ray parameter hitting the surface.
  std::optional<double> intersect(const Vec3& origin, const Vec3& dir) const;
  Vec3 normal(const Vec3& X) const;
  // Unsigned distance from X to the surface.
  double distance(const Vec3& X) const;
  double diameter() const;
};

struct SceneSpec {
  std::uint64_t seed = 1;
  int M = 8;
  int N = 6;
  double sigma = 0.0;
  SurfaceKind surface = SurfaceKind::Volume;
  double radius = 1.0;
  double height = 2.0;
  int width = 1008;
  int height_px = 756;
  // Camera ring: distance as a multiple of the scene radius, angular span, vertical jitter.
  double ring_distance = 4.0;
  double arc_deg = 360.0;
  double elevation_jitter = 0.15;
  // Surface sampling window for points (cylinder/sphere angle, plane/cylinder height fraction).
  double point_arc_deg = 60.0;
  double point_height_frac = 0.7;
  // Texture controls.
  bool textured = true;
  double feature_size = 0.0;  // 0 picks radius / 30
  bool marks = true;
  double mark_radius = 0.0;  // 0 picks feature_size
};

struct Texture {
  bool enabled = true;
  std::uint64_t seed = 0;
  double feature_size = 1.0;
  double contrast = 0.45;
  std::vector<Vec3> marks;
  double mark_radius = 0.0;

  double value(const Vec3& X) const;
};

struct SyntheticScene {
  SceneSpec spec;
  std::vector<Vec3> points;
  std::vector<Mat34> cameras;
  std::vector<Vec3> centers;
  Surface surface;
  Texture texture;
  // visible[m][n]
  std::vector<std::vector<bool>> visible;

  int width() const { return spec.width; }
  int height() const { return spec.height_px; }
  double diameter() const;
  SolutionGroup group() const;
};

std::pair<SyntheticScene, CorrespondenceSet> make_scene(const SceneSpec& spec);
std::pair<SyntheticScene, CorrespondenceSet> make_scene(int M, int N, double sigma,
                                                        std::uint64_t seed);

// Points sampled uniformly on the surface window of the spec, facing the ring.
std::vector<Vec3> sample_surface_points(const SyntheticScene& scene, int count, std::uint64_t seed);

// Whether X is unoccluded-facing and projects inside image n.
bool point_visible(const SyntheticScene& scene, const Vec3& X, int n);

GrayImage render_image(const SyntheticScene& scene, int n);
std::vector<GrayImage> render_textured_scene(const SyntheticScene& scene);

// Fit a projective transform on points 1-5 of est onto the truth and return the
// largest remaining point error divided by the scene diameter.
double gauge_residual(const SolutionGroup& est, const SyntheticScene& truth);

}  // namespace geocloud
