#include "geocloud/jenks.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "geocloud/error.hpp"

namespace geocloud {

namespace {

// Dynamic program over values sorted ascending with positive weights.
std::vector<JenksResult> jenks_sorted(const std::vector<double>& x, const std::vector<double>& w,
                                      int k_max) {
  const std::size_t n = x.size();
  const int K = std::min<int>(k_max, int(n));

  // Shift by the median so prefix sums of squares stay well conditioned.
  const double shift = x[n / 2];
  std::vector<double> s0(n + 1, 0.0), s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i] - shift;
    s0[i + 1] = s0[i] + w[i];
    s1[i + 1] = s1[i] + w[i] * v;
    s2[i + 1] = s2[i] + w[i] * v * v;
  }
  // Weighted sum of squared deviations of x[i..j).
  auto cost = [&](std::size_t i, std::size_t j) {
    const double a = s1[j] - s1[i];
    return std::max(0.0, (s2[j] - s2[i]) - a * a / (s0[j] - s0[i]));
  };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // D[k][j]: best deviance of the first j values in k + 1 classes; B holds the last class start.
  std::vector<std::vector<double>> D(K, std::vector<double>(n + 1, kInf));
  std::vector<std::vector<std::size_t>> B(K, std::vector<std::size_t>(n + 1, 0));
  for (std::size_t j = 1; j <= n; ++j) D[0][j] = cost(0, j);
  for (int k = 1; k < K; ++k) {
    for (std::size_t j = k + 1; j <= n; ++j) {
      double best = kInf;
      std::size_t arg = k;
      for (std::size_t i = k; i < j; ++i) {
        const double c = D[k - 1][i] + cost(i, j);
        if (c < best) {
          best = c;
          arg = i;
        }
      }
      D[k][j] = best;
      B[k][j] = arg;
    }
  }

  std::vector<JenksResult> out(K);
  for (int k = 0; k < K; ++k) {
    std::vector<std::size_t> starts(k + 1);
    std::size_t j = n;
    for (int c = k; c >= 1; --c) {
      starts[c] = B[c][j];
      j = starts[c];
    }
    starts[0] = 0;
    JenksResult& r = out[k];
    r.starts = starts;
    r.deviance = D[k][n];
    r.labels.assign(n, 0);
    r.means.assign(k + 1, 0.0);
    for (int c = 0; c <= k; ++c) {
      const std::size_t lo = starts[c], hi = c == k ? n : starts[c + 1];
      double sum = 0, wsum = 0;
      for (std::size_t i = lo; i < hi; ++i) {
        sum += w[i] * x[i];
        wsum += w[i];
        r.labels[i] = c;
      }
      r.means[c] = sum / wsum;
    }
  }
  return out;
}

}  // namespace

std::vector<JenksResult> jenks_all_k(const std::vector<double>& values, int k_max) {
  const std::size_t n = values.size();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "no values to cluster");
  if (k_max < 1) throw Error(ErrorCode::InvalidArgument, "k must be positive");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> x(n), w(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) x[i] = values[order[i]];

  auto out = jenks_sorted(x, w, k_max);
  for (auto& r : out) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[order[i]] = r.labels[i];
    r.labels = std::move(labels);
  }
  return out;
}

std::vector<JenksResult> jenks_all_k_grouped(const std::vector<double>& values, int k_max) {
  const std::size_t n = values.size();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "no values to cluster");
  if (k_max < 1) throw Error(ErrorCode::InvalidArgument, "k must be positive");

  std::vector<double> x(values);
  std::sort(x.begin(), x.end());
  std::vector<double> ux, uw;
  for (double v : x) {
    if (!ux.empty() && ux.back() == v) {
      uw.back() += 1.0;
    } else {
      ux.push_back(v);
      uw.push_back(1.0);
    }
  }
  auto out = jenks_sorted(ux, uw, k_max);
  for (auto& r : out) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = std::lower_bound(ux.begin(), ux.end(), values[i]);
      labels[i] = r.labels[std::size_t(it - ux.begin())];
    }
    r.labels = std::move(labels);
    r.starts.clear();
  }
  return out;
}

JenksResult jenks_cluster_1d(const std::vector<double>& values, int k) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "no values to cluster");
  if (k < 1 || std::size_t(k) > values.size())
    throw Error(ErrorCode::InvalidArgument, "k must lie in 1..|values|");
  return jenks_all_k(values, k).back();
}

}  // namespace geocloud
