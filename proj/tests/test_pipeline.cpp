#include "geocloud/pipeline.hpp"

#include <Eigen/SVD>

#include "geocloud/synthgen.hpp"
#include "test_util.hpp"

using namespace geocloud;
using namespace geocloud::test;

namespace {

DistanceMeasurements distances_of(const std::vector<Vec3>& X) {
  DistanceMeasurements d;
  const int n = int(X.size());
  d.D.resize(n, n);
  for (int i = 0; i < n; ++i) {
    d.ids.push_back(i);
    for (int j = 0; j < n; ++j) d.D(i, j) = (X[i] - X[j]).norm();
  }
  return d;
}

// Residual after the best rigid motion, reflections allowed.
double procrustes_residual(const std::vector<Vec3>& A, const std::vector<Vec3>& B) {
  const int n = int(A.size());
  Eigen::Matrix3Xd a(3, n), b(3, n);
  for (int i = 0; i < n; ++i) {
    a.col(i) = A[i];
    b.col(i) = B[i];
  }
  a.colwise() -= a.rowwise().mean();
  b.colwise() -= b.rowwise().mean();
  Eigen::JacobiSVD<Mat3> svd(b * a.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 R = svd.matrixU() * svd.matrixV().transpose();
  return (R * a - b).colwise().norm().maxCoeff();
}

CloudPoint cp(double x, double y, double z, double ed) {
  CloudPoint p;
  p.position = Vec3(x, y, z);
  p.e_d = ed;
  return p;
}

PointCloud random_cloud(int n, double extent) {
  PointCloud pc;
  for (int i = 0; i < n; ++i) pc.push_back(cp(uniform(0, extent), uniform(0, extent), uniform(0, extent),
                                              uniform(0, 10)));
  return pc;
}

}  // namespace

TEST(Mds, RegularTetrahedron) {
  const std::vector<Vec3> X{{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  const auto Y = mds_embed(distances_of(X));
  ASSERT_EQ(Y.size(), 4u);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR((Y[i] - Y[j]).norm(), (X[i] - X[j]).norm(), 1e-12);
}

TEST(Mds, TriangleViolation) {
  DistanceMeasurements d;
  d.ids = {0, 1, 2, 3};
  d.D.resize(4, 4);
  d.D << 0, 1, 3, 1, 1, 0, 1, 1, 3, 1, 0, 1, 1, 1, 1, 0;
  EXPECT_ERROR_CODE(mds_embed(d), ErrorCode::NotEmbeddable);
}

TEST(Mds, FivePointsUpToRigidMotion) {
  for (int t = 0; t < 10; ++t) {
    std::vector<Vec3> X;
    for (int i = 0; i < 5; ++i) X.push_back(random_point(3));
    EXPECT_LE(procrustes_residual(X, mds_embed(distances_of(X))), 1e-8);
  }
}

TEST(Mds, Errors) {
  EXPECT_ERROR_CODE(mds_embed(distances_of({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}})), ErrorCode::NotEmbeddable);
  auto d = distances_of({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  d.ids.pop_back();
  EXPECT_ERROR_CODE(mds_embed(d), ErrorCode::DimensionMismatch);
}

namespace {

void check_seeded(int M, int N, int nseeds, std::uint64_t seed) {
  auto [scene, corr] = make_scene(M, N, 0.0, seed);
  std::vector<Vec3> truth_seeds(scene.points.begin(), scene.points.begin() + nseeds);
  const auto emb = mds_embed(distances_of(truth_seeds));
  std::map<int, Vec3> seeds;
  for (int k = 0; k < nseeds; ++k) seeds[k] = emb[k];
  const SolutionGroup g = seed_and_solve(corr, seeds);
  // The group is metric up to a rigid motion; compare all points that way.
  EXPECT_LE(procrustes_residual(scene.points, g.points), 1e-4 * scene.diameter());
  for (int a = 0; a < nseeds; ++a)
    for (int b = a + 1; b < nseeds; ++b) {
      const double dt = (scene.points[a] - scene.points[b]).norm();
      EXPECT_LE(std::abs((g.points[a] - g.points[b]).norm() - dt), 1e-6 * dt);
    }
}

}  // namespace

TEST(SeedAndSolve, FiveSeeds) { check_seeded(12, 8, 5, 3); }

TEST(SeedAndSolve, FourSeeds) { check_seeded(12, 8, 4, 4); }

TEST(SeedAndSolve, LargeInstance) { check_seeded(27, 116, 5, 6); }

TEST(SeedAndSolve, UnknownSeed) {
  auto [scene, corr] = make_scene(10, 6, 0.0, 8);
  std::map<int, Vec3> seeds{{0, scene.points[0]}, {1, scene.points[1]}, {2, scene.points[2]},
                            {3, scene.points[3]}, {40, Vec3(1, 2, 3)}};
  EXPECT_ERROR_CODE(seed_and_solve(corr, seeds), ErrorCode::InsufficientCovisibility);
}

TEST(SelectBestSpread, Examples) {
  const PointCloud pc{cp(0, 0, 0, 1), cp(0.3, 0, 0, 2), cp(0.6, 0, 0, 3)};
  const auto s = select_best_spread(pc, 0.5);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].position.x(), 0.0);
  EXPECT_EQ(s[1].position.x(), 0.6);
  const auto t = select_best_spread({cp(0, 0, 0, 3), cp(0.3, 0, 0, 1), cp(0.6, 0, 0, 2)}, 0.5);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].position.x(), 0.3);
  EXPECT_ERROR_CODE(select_best_spread(pc, 0.0), ErrorCode::InvalidArgument);
}

TEST(SelectBestSpread, MatchesQuadraticGreedy) {
  for (int t = 0; t < 10; ++t) {
    const PointCloud pc = random_cloud(300, 3.0);
    std::vector<int> order(pc.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return pc[a].e_d < pc[b].e_d; });
    std::vector<Vec3> kept;
    for (int i : order) {
      bool ok = true;
      for (const auto& k : kept) ok &= (k - pc[i].position).norm() >= 0.4;
      if (ok) kept.push_back(pc[i].position);
    }
    const auto s = select_best_spread(pc, 0.4);
    ASSERT_EQ(s.size(), kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) EXPECT_EQ(s[i].position, kept[i]);
  }
}

TEST(RefineByDistance, Properties) {
  for (int t = 0; t < 10; ++t) {
    const PointCloud pc = random_cloud(400, 2.0);
    const auto r = refine_by_distance(pc, 0.3);
    EXPECT_EQ(refine_property_violation(pc, r, 0.3), "");
    EXPECT_FALSE(r.empty());
  }
}

TEST(RefineByDistance, TwoClusters) {
  PointCloud pc;
  for (int i = 0; i < 20; ++i) pc.push_back(cp(uniform(0, 0.1), uniform(0, 0.1), 0, uniform(1, 9)));
  for (int i = 0; i < 20; ++i) pc.push_back(cp(5 + uniform(0, 0.1), uniform(0, 0.1), 0, uniform(1, 9)));
  pc[7].e_d = 0.5;
  pc[31].e_d = 0.25;
  const auto r = refine_by_distance(pc, 0.5);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].e_d, 0.5);
  EXPECT_EQ(r[1].e_d, 0.25);
}

TEST(RefineByDistance, TiesByIndex) {
  const PointCloud pc{cp(0, 0, 0, 1), cp(0.1, 0, 0, 1)};
  const auto r = refine_by_distance(pc, 0.5);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].position.x(), 0.0);
}

TEST(RefineByPixel, Thresholds) {
  PointCloud pc;
  for (double e : {1.0, 4.0, 5.0, 6.0, 30.0}) pc.push_back(cp(e, 0, 0, e));
  EXPECT_EQ(refine_by_pixel(pc, 5).size(), 3u);
  EXPECT_TRUE(refine_by_pixel(pc, 0.5).empty());
  EXPECT_EQ(refine_by_pixel(pc, std::numeric_limits<double>::infinity()).size(), pc.size());
  std::size_t prev = 0;
  for (double eps = 0; eps < 40; eps += 0.5) {
    const std::size_t n = refine_by_pixel(pc, eps).size();
    EXPECT_GE(n, prev);
    prev = n;
  }
}

namespace {

std::pair<SyntheticScene, CorrespondenceSet> growth_scene(bool textured) {
  SceneSpec s;
  s.surface = SurfaceKind::Cylinder;
  s.radius = 10;
  s.height = 30;
  s.M = 8;
  s.N = 10;
  s.arc_deg = 40;
  s.point_arc_deg = 40;
  s.point_height_frac = 0.5;
  s.textured = textured;
  s.marks = textured;
  s.seed = 21;
  return make_scene(s);
}

}  // namespace

TEST(Growth, ZeroLevelsGivesSeedCloud) {
  auto [scene, corr] = growth_scene(true);
  GrowthConfig cfg;
  cfg.max_levels = 0;
  const auto pc = grow_point_cloud(scene.group(), corr, {}, cfg);
  EXPECT_EQ(pc.size(), std::size_t(corr.M()));
  for (const auto& p : pc) {
    EXPECT_EQ(p.level, 0);
    EXPECT_NEAR(p.e_d, 0.0, 1e-9);
  }
}

TEST(Growth, TexturelessAddsNothing) {
  auto [scene, corr] = growth_scene(false);
  GrowthConfig cfg;
  cfg.tau_i = 3;
  GrowthStats st;
  const auto pc = grow_point_cloud(scene.group(), corr, render_textured_scene(scene), cfg, &st);
  EXPECT_EQ(pc.size(), std::size_t(corr.M()));
  ASSERT_FALSE(st.points_per_level.empty());
  EXPECT_EQ(st.points_per_level[0], 0u);
}

TEST(Growth, LevelsNest) {
  auto [scene, corr] = growth_scene(true);
  GrowthConfig cfg;
  cfg.tau_i = 4;
  cfg.spread = {1.0};
  cfg.neighbor_limit = 2;
  cfg.max_pairs_per_level = 12;
  GrowthStats st;
  const auto pc = grow_point_cloud(scene.group(), corr, render_textured_scene(scene), cfg, &st);
  ASSERT_GE(st.points_per_level.size(), 1u);
  EXPECT_GT(st.points_per_level[0], 0u);
  std::size_t total = corr.M();
  for (auto n : st.points_per_level) total += n;
  EXPECT_EQ(total, pc.size());
  for (const auto& p : pc) {
    if (p.level == 0) continue;
    ASSERT_GE(p.anchor_a, 0);
    EXPECT_LT(pc[p.anchor_a].level, p.level);
    EXPECT_LT(pc[p.anchor_b].level, p.level);
    EXPECT_GE(p.e_i, cfg.tau_i);
    EXPECT_LE(p.e_d, cfg.tau_d);
  }
}

TEST(Growth, InvalidConfig) {
  auto [scene, corr] = growth_scene(true);
  GrowthConfig cfg;
  cfg.theta = 1.5;
  EXPECT_ERROR_CODE(grow_point_cloud(scene.group(), corr, {}, cfg), ErrorCode::InvalidArgument);
}
