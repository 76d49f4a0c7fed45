#pragma once

#include <cmath>
#include <vector>

#include "geocloud/geometry.hpp"

namespace geocloud {

// Row-major H x W intensities in [0, 1]. Image point (u, v) addresses column u, row v.
struct GrayImage {
  int H = 0;
  int W = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int h, int w, float fill = 0.0f) : H(h), W(w), data(std::size_t(h) * w, fill) {}

  float& operator()(int row, int col) { return data[std::size_t(row) * W + col]; }
  float operator()(int row, int col) const { return data[std::size_t(row) * W + col]; }

  // A point exists when its nearest pixel lies inside the image.
  bool exists(const Vec2& x) const {
    const long c = std::lround(x.x()), r = std::lround(x.y());
    return std::isfinite(x.x()) && std::isfinite(x.y()) && c >= 0 && c < W && r >= 0 && r < H;
  }

  // Nearest-integer lookup; the caller checks exists() first.
  float sample(const Vec2& x) const {
    return (*this)(int(std::lround(x.y())), int(std::lround(x.x())));
  }
};

}  // namespace geocloud
