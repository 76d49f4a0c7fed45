#include "geocloud/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "geocloud/error.hpp"
#include "geocloud/io.hpp"

namespace geocloud {

namespace {

bool finite_camera(const Mat34& P) { return P.allFinite(); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  return out;
}

void render_histogram(const ErrorReport& r, const std::filesystem::path& path) {
  constexpr int kBar = 4, kMargin = 10, kPlotH = 200;
  const int bins = int(r.histogram.size());
  const int W = 2 * kMargin + kBar * bins, H = 2 * kMargin + kPlotH;
  std::vector<unsigned char> rgb(std::size_t(W) * H * 3, 255);
  auto put = [&](int x, int y, unsigned char cr, unsigned char cg, unsigned char cb) {
    if (x < 0 || x >= W || y < 0 || y >= H) return;
    unsigned char* p = &rgb[(std::size_t(y) * W + x) * 3];
    p[0] = cr;
    p[1] = cg;
    p[2] = cb;
  };
  std::size_t peak = 1;
  for (const auto& b : r.histogram) peak = std::max(peak, b.count);
  for (int i = 0; i < bins; ++i) {
    const int h = int(std::lround(double(r.histogram[i].count) / double(peak) * kPlotH));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < kBar - 1; ++x)
        put(kMargin + i * kBar + x, kMargin + kPlotH - 1 - y, 70, 70, 160);
  }
  for (int x = kMargin; x < W - kMargin; ++x) put(x, kMargin + kPlotH, 0, 0, 0);
  // Mean in red, 95th percentile in green.
  auto marker = [&](double v, unsigned char cr, unsigned char cg) {
    if (!(v >= 0.0 && v <= 100.0)) return;
    const int x = kMargin + int(std::lround(v * kBar));
    for (int y = kMargin; y < kMargin + kPlotH; ++y) put(x, y, cr, cg, 0);
  };
  marker(r.mean, 220, 0);
  marker(r.p95, 0, 180);
  save_png_rgb(rgb, W, H, path);
}

}  // namespace

double relative_error_group(const SolutionGroup& g, const CorrespondenceSet& corr) {
  if (g.M() != corr.M() || g.N() != corr.N())
    throw Error(ErrorCode::DimensionMismatch, "group and correspondences differ in size");
  double sum = 0.0;
  std::size_t cells = 0;
  for (int n = 0; n < corr.N(); ++n) {
    if (!finite_camera(g.cameras[n])) continue;
    for (int m = 0; m < corr.M(); ++m) {
      if (!corr.visible(m, n) || !g.points[m].allFinite()) continue;
      sum += (project(g.cameras[n], g.points[m]) - corr.at(m, n)).norm();
      ++cells;
    }
  }
  if (cells == 0) throw Error(ErrorCode::EmptyData, "no visible solved cells");
  return sum / double(cells);
}

double relative_error_point(const CloudPoint& p, double H, double W) {
  if (!(H > 0 && W > 0)) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  return std::pow(p.e_d / std::hypot(H, W), double(p.e_i));
}

double nearest_rank_percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw Error(ErrorCode::EmptyData, "no values");
  std::sort(values.begin(), values.end());
  const double n = double(values.size());
  const std::size_t rank = std::size_t(std::max(1.0, std::ceil(pct / 100.0 * n - 1e-9)));
  return values[std::min(rank, values.size()) - 1];
}

std::vector<KeyPointDifference> key_point_differences(const SolutionGroup& g,
                                                      const CorrespondenceSet& corr) {
  if (g.M() != corr.M() || g.N() != corr.N())
    throw Error(ErrorCode::DimensionMismatch, "group and correspondences differ in size");
  std::vector<KeyPointDifference> out;
  for (int m = 0; m < corr.M(); ++m) {
    if (!g.points[m].allFinite()) continue;
    for (int n = 0; n < corr.N(); ++n) {
      if (!corr.visible(m, n) || !finite_camera(g.cameras[n])) continue;
      out.push_back({m, n, (project(g.cameras[n], g.points[m]) - corr.at(m, n)).norm()});
    }
  }
  return out;
}

ErrorReport make_report(const std::vector<KeyPointDifference>& diffs, const PointCloud& cloud,
                        double H, double W) {
  if (diffs.empty()) throw Error(ErrorCode::EmptyData, "no differences to report");
  ErrorReport r;
  r.differences = diffs;
  r.count = diffs.size();
  std::vector<double> v;
  v.reserve(diffs.size());
  double sum = 0.0;
  for (const auto& d : diffs) {
    v.push_back(d.diff_px);
    sum += d.diff_px;
  }
  r.mean = sum / double(r.count);
  r.p95 = nearest_rank_percentile(v, 95.0);

  constexpr int kBins = 100;
  r.histogram.resize(kBins);
  for (int i = 0; i < kBins; ++i) {
    r.histogram[i].lo = i;
    r.histogram[i].hi = i + 1;
  }
  for (double x : v) {
    if (x > kBins) {
      ++r.above_range;
      continue;
    }
    ++r.histogram[std::min(kBins - 1, int(std::floor(x)))].count;
  }
  auto mark = [&](double x, const char* name) {
    if (!(x >= 0.0 && x <= kBins)) return;
    std::string& m = r.histogram[std::min(kBins - 1, int(std::floor(x)))].marker;
    m += m.empty() ? name : std::string(";") + name;
  };
  mark(r.mean, "mean");
  mark(r.p95, "p95");

  if (!cloud.empty()) {
    r.has_cloud = true;
    CloudSummary& c = r.cloud;
    c.count = cloud.size();
    std::vector<double> ed;
    ed.reserve(cloud.size());
    for (const auto& p : cloud) {
      ed.push_back(p.e_d);
      c.e_d_mean += p.e_d;
      c.e_i_mean += p.e_i;
      if (H > 0 && W > 0) c.relative_error_mean += relative_error_point(p, H, W);
    }
    const double n = double(cloud.size());
    c.e_d_mean /= n;
    c.e_i_mean /= n;
    c.relative_error_mean /= n;
    c.e_d_p95 = nearest_rank_percentile(ed, 95.0);
  }
  return r;
}

void emit_report(const ErrorReport& r, const std::filesystem::path& dir) {
  if (r.differences.empty()) throw Error(ErrorCode::EmptyData, "no differences to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string());
  {
    auto out = open_out(dir / "raw.csv");
    out << "point_id,image_id,diff_px\n";
    for (const auto& d : r.differences)
      out << d.point_id << ',' << d.image_id << ',' << fmt(d.diff_px) << '\n';
  }
  {
    auto out = open_out(dir / "summary.csv");
    out << "mean,p95,count\n" << fmt(r.mean) << ',' << fmt(r.p95) << ',' << r.count << '\n';
  }
  {
    auto out = open_out(dir / "histogram.csv");
    out << "bin_lo,bin_hi,count,marker\n";
    for (const auto& b : r.histogram)
      out << fmt(b.lo) << ',' << fmt(b.hi) << ',' << b.count << ',' << b.marker << '\n';
    out << "100,inf," << r.above_range << ",\n";
  }
  if (r.has_cloud) {
    auto out = open_out(dir / "cloud_summary.csv");
    out << "count,e_d_mean,e_d_p95,e_i_mean,relative_error_mean\n"
        << r.cloud.count << ',' << fmt(r.cloud.e_d_mean) << ',' << fmt(r.cloud.e_d_p95) << ','
        << fmt(r.cloud.e_i_mean) << ',' << fmt(r.cloud.relative_error_mean) << '\n';
  }
  render_histogram(r, dir / "histogram.png");
}

}  // namespace geocloud
