#include "geocloud/jenks.hpp"

#include <algorithm>
#include <functional>

#include "test_util.hpp"

using namespace geocloud;
using namespace geocloud::test;

namespace {

double ssd(const std::vector<double>& x, std::size_t lo, std::size_t hi) {
  double m = 0;
  for (std::size_t i = lo; i < hi; ++i) m += x[i];
  m /= double(hi - lo);
  double s = 0;
  for (std::size_t i = lo; i < hi; ++i) s += (x[i] - m) * (x[i] - m);
  return s;
}

// Exhaustive search over every contiguous partition of the sorted values.
double brute_force(const std::vector<double>& sorted, int k, std::vector<std::size_t>* starts) {
  const std::size_t n = sorted.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> cut(k);
  std::function<void(int, std::size_t)> rec = [&](int c, std::size_t from) {
    if (c == k) {
      double d = 0;
      for (int i = 0; i < k; ++i) d += ssd(sorted, cut[i], i + 1 < k ? cut[i + 1] : n);
      if (d < best - 1e-12) {
        best = d;
        *starts = cut;
      }
      return;
    }
    for (std::size_t s = from; s + (k - c) <= n; ++s) {
      cut[c] = s;
      rec(c + 1, s + 1);
    }
  };
  cut[0] = 0;
  rec(1, 1);
  if (k == 1) {
    best = ssd(sorted, 0, n);
    *starts = {0};
  }
  return best;
}

}  // namespace

TEST(Jenks, ObviousGap) {
  const auto r = jenks_cluster_1d({0.1, 5.0, 0.2, 5.1}, 2);
  ASSERT_EQ(r.means.size(), 2u);
  EXPECT_NEAR(r.means[0], 0.15, 1e-12);
  EXPECT_NEAR(r.means[1], 5.05, 1e-12);
  EXPECT_EQ(r.labels, (std::vector<int>{0, 1, 0, 1}));
}

TEST(Jenks, SingletonClasses) {
  const std::vector<double> v{3, 1, 4, 1.5, 9, 2.6};
  const auto r = jenks_cluster_1d(v, int(v.size()));
  EXPECT_NEAR(r.deviance, 0.0, 1e-12);
  std::vector<int> labels = r.labels;
  std::sort(labels.begin(), labels.end());
  EXPECT_EQ(std::unique(labels.begin(), labels.end()) - labels.begin(), 6);
}

TEST(Jenks, Errors) {
  EXPECT_ERROR_CODE(jenks_cluster_1d({}, 1), ErrorCode::EmptyInput);
  EXPECT_ERROR_CODE(jenks_cluster_1d({1.0, 2.0}, 3), ErrorCode::InvalidArgument);
  EXPECT_ERROR_CODE(jenks_cluster_1d({1.0, 2.0}, 0), ErrorCode::InvalidArgument);
}

TEST(Jenks, MatchesExhaustiveOptimum) {
  for (int t = 0; t < 60; ++t) {
    const int n = 1 + int(uniform(0, 12));
    std::vector<double> v(n);
    for (auto& x : v) x = std::round(uniform(0, 50) * 100) / 100;
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const auto all = jenks_all_k(v, n);
    for (int k = 1; k <= n; ++k) {
      std::vector<std::size_t> starts;
      const double opt = brute_force(sorted, k, &starts);
      EXPECT_NEAR(all[k - 1].deviance, opt, 1e-9 * (1 + opt)) << "n=" << n << " k=" << k;
    }
  }
}

TEST(Jenks, GroupedKeepsEqualValuesTogether) {
  const std::vector<double> v{1, 1, 1, 2, 2, 9, 9, 9, 9};
  const auto all = jenks_all_k_grouped(v, 3);
  ASSERT_EQ(all.size(), 3u);
  const auto& r = all[2];
  EXPECT_NEAR(r.deviance, 0.0, 1e-12);
  EXPECT_EQ(r.labels, (std::vector<int>{0, 0, 0, 1, 1, 2, 2, 2, 2}));
  // Deviance agrees with the ungrouped solver when ties cannot split.
  const auto plain = jenks_all_k(v, 3);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(all[k].deviance, plain[k].deviance, 1e-12);
}
