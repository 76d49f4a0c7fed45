#include "geocloud/evaluation.hpp"

#include <fstream>
#include <sstream>

#include "geocloud/synthgen.hpp"
#include "geocloud/wpfc.hpp"
#include "test_util.hpp"

using namespace geocloud;
using namespace geocloud::test;

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    if (!line.empty() && line.back() == ',') row.push_back("");
    rows.push_back(row);
  }
  return rows;
}

std::vector<KeyPointDifference> diffs_of(const std::vector<double>& v) {
  std::vector<KeyPointDifference> d;
  for (std::size_t i = 0; i < v.size(); ++i) d.push_back({int(i), 0, v[i]});
  return d;
}

}  // namespace

TEST(RelativeErrorGroup, ExactIsZero) {
  auto [scene, corr] = make_scene(8, 6, 0.0, 2);
  EXPECT_NEAR(relative_error_group(scene.group(), corr), 0.0, 1e-9);
}

TEST(RelativeErrorGroup, SingleOffsetCell) {
  auto [scene, corr] = make_scene(6, 5, 0.0, 3);
  ASSERT_EQ(corr.visible_count(), 30);
  corr.set(1, 2, corr.at(1, 2) + Vec2(9, 12));
  EXPECT_NEAR(relative_error_group(scene.group(), corr), 0.5, 1e-9);
}

TEST(RelativeErrorGroup, BoundedByRootMeanSquare) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto [scene, corr] = make_scene(10, 6, 2.0, 40 + s);
    const SolutionGroup g = scene.group();
    const double mean = relative_error_group(g, corr);
    EXPECT_GT(mean, 0.0);
    EXPECT_LE(mean, std::sqrt(objective(g, corr) / corr.visible_count()) + 1e-12);
  }
}

TEST(RelativeErrorGroup, Errors) {
  auto [scene, corr] = make_scene(6, 5, 0.0, 3);
  SolutionGroup g = scene.group();
  g.points.pop_back();
  EXPECT_ERROR_CODE(relative_error_group(g, corr), ErrorCode::DimensionMismatch);
  SolutionGroup h = scene.group();
  for (auto& X : h.points) X = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  EXPECT_ERROR_CODE(relative_error_group(h, corr), ErrorCode::EmptyData);
}

TEST(RelativeErrorPoint, Examples) {
  CloudPoint p;
  p.e_d = 2.5;
  p.e_i = 2;
  EXPECT_NEAR(relative_error_point(p, 3, 4), 0.25, 1e-15);
  p.e_d = 25;
  p.e_i = 7;
  EXPECT_NEAR(relative_error_point(p, 3024, 4032) / std::pow(25.0 / 5040.0, 7), 1.0, 1e-12);
  EXPECT_ERROR_CODE(relative_error_point(p, 0, 4), ErrorCode::InvalidArgument);
}

TEST(RelativeErrorPoint, Monotone) {
  CloudPoint p;
  p.e_i = 5;
  double prev = -1;
  for (double e = 0; e < 100; e += 1.5) {
    p.e_d = e;
    const double r = relative_error_point(p, 756, 1008);
    EXPECT_GE(r, prev);
    prev = r;
  }
  p.e_d = 10;
  prev = 2;
  for (int i = 1; i < 12; ++i) {
    p.e_i = i;
    const double r = relative_error_point(p, 756, 1008);
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(Percentile, NearestRank) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  EXPECT_EQ(nearest_rank_percentile(v, 95), 95);
  EXPECT_EQ(nearest_rank_percentile({3, 1, 2}, 50), 2);
  EXPECT_EQ(nearest_rank_percentile({7}, 95), 7);
}

TEST(Report, SingleValue) {
  const auto r = make_report(diffs_of({20.5}));
  EXPECT_EQ(r.mean, 20.5);
  EXPECT_EQ(r.p95, 20.5);
  EXPECT_EQ(r.count, 1u);
  EXPECT_EQ(r.histogram[20].count, 1u);
  EXPECT_EQ(r.histogram[20].marker, "mean;p95");
}

TEST(Report, OneToHundred) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  const auto r = make_report(diffs_of(v));
  EXPECT_DOUBLE_EQ(r.mean, 50.5);
  EXPECT_EQ(r.p95, 95);
  EXPECT_EQ(r.histogram[50].marker, "mean");
  EXPECT_EQ(r.histogram[95].marker, "p95");
  EXPECT_EQ(r.above_range, 0u);
  EXPECT_ERROR_CODE(make_report({}), ErrorCode::EmptyData);
}

TEST(Report, FilesRecount) {
  std::vector<double> v;
  for (int i = 0; i < 500; ++i) v.push_back(uniform(0, 140));
  PointCloud cloud(3);
  cloud[0].e_d = 1;
  cloud[0].e_i = 3;
  cloud[1].e_d = 2;
  cloud[1].e_i = 4;
  cloud[2].e_d = 4;
  cloud[2].e_i = 5;
  const auto r = make_report(diffs_of(v), cloud, 756, 1008);
  const auto dir = temp_dir("report");
  emit_report(r, dir);
  const auto raw = read_csv(dir / "raw.csv");
  ASSERT_EQ(raw.size(), v.size() + 1);
  double sum = 0;
  std::vector<double> back;
  for (std::size_t i = 1; i < raw.size(); ++i) back.push_back(std::stod(raw[i][2]));
  for (double x : back) sum += x;
  const auto summary = read_csv(dir / "summary.csv");
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_NEAR(std::stod(summary[1][0]), sum / back.size(), 1e-12);
  EXPECT_EQ(std::stod(summary[1][1]), nearest_rank_percentile(back, 95));
  EXPECT_EQ(std::stoul(summary[1][2]), v.size());
  const auto hist = read_csv(dir / "histogram.csv");
  ASSERT_EQ(hist.size(), 102u);
  std::size_t total = 0;
  for (std::size_t i = 1; i < hist.size(); ++i) total += std::stoul(hist[i][2]);
  EXPECT_EQ(total, v.size());
  EXPECT_EQ(hist.back()[1], "inf");
  const auto cs = read_csv(dir / "cloud_summary.csv");
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(cs[1][0], "3");
  EXPECT_NEAR(std::stod(cs[1][1]), 7.0 / 3, 1e-12);
  EXPECT_TRUE(std::filesystem::file_size(dir / "histogram.png") > 0);
}
