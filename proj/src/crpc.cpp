#include "geocloud/crpc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>

#include <spdlog/spdlog.h>

#include "geocloud/error.hpp"

namespace geocloud {

Eigen::VectorXd raw_line_samples(const GrayImage& img, const ImagePoint& a, const ImagePoint& b,
                                 int L) {
  if (L < 2) throw Error(ErrorCode::InvalidArgument, "a line profile needs at least 2 samples");
  if (!img.exists(a) || !img.exists(b))
    throw Error(ErrorCode::EndpointOutOfBounds, "segment endpoint outside the image");
  Eigen::VectorXd v(L);
  for (int l = 0; l < L; ++l) v[l] = img.sample(grid_point(a, b, l, L));
  return v;
}

ImageLineProfile sample_image_line(const GrayImage& img, const ImagePoint& a, const ImagePoint& b,
                                   int L, bool centered) {
  ImageLineProfile p;
  p.L = L;
  p.a = a;
  p.b = b;
  p.values = raw_line_samples(img, a, b, L);
  if (centered) p.values.array() -= p.values.mean();
  const double norm = p.values.norm();
  const double scale = centered ? p.values.cwiseAbs().maxCoeff() : 0.0;
  if (norm == 0.0 || (centered && scale < 1e-12))
    throw Error(ErrorCode::ConstantProfile, "line profile has no variation");
  p.values /= norm;
  return p;
}

double pearson(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) throw Error(ErrorCode::DimensionMismatch, "profile lengths differ");
  if (u.size() < 2) throw Error(ErrorCode::ConstantProfile, "profile too short");
  const Eigen::VectorXd cu = u.array() - u.mean();
  const Eigen::VectorXd cv = v.array() - v.mean();
  const double nu = cu.norm(), nv = cv.norm();
  if (nu <= 1e-300 || nv <= 1e-300) throw Error(ErrorCode::ConstantProfile, "constant profile");
  return std::clamp(cu.dot(cv) / (nu * nv), -1.0, 1.0);
}

int segment_samples(const ImagePoint& a, const ImagePoint& b) {
  return std::max(2, int(std::lround((a - b).cwiseAbs().maxCoeff())));
}

int round_even(double x, int min_value) {
  return std::max(min_value, 2 * int(std::lround(x / 2.0)));
}

ImagePoint grid_point(const ImagePoint& a, const ImagePoint& b, double l, int L) {
  const double t = l / double(L - 1);
  return (1.0 - t) * a + t * b;
}

SimilarityResult similar_pair(const GrayImage& img_i, const GrayImage& img_j, const ImagePoint& ai,
                              const ImagePoint& bi, const ImagePoint& aj, const ImagePoint& bj,
                              double theta, bool centered) {
  SimilarityResult r;
  r.L = std::max(segment_samples(ai, bi), segment_samples(aj, bj));
  const auto pi = sample_image_line(img_i, ai, bi, r.L, centered);
  const auto pj = sample_image_line(img_j, aj, bj, r.L, centered);
  r.correlation = std::clamp(pi.values.dot(pj.values), -1.0, 1.0);
  r.similar = r.correlation > 1.0 - theta;
  return r;
}

SimilarityResult similar_pair(const GrayImage& img_i, const GrayImage& img_j, const Mat34& Pi,
                              const Mat34& Pj, const Vec3& Xk, const Vec3& Xk2, double theta,
                              bool centered) {
  return similar_pair(img_i, img_j, project(Pi, Xk), project(Pi, Xk2), project(Pj, Xk),
                      project(Pj, Xk2), theta, centered);
}

namespace {

double window_corr_from_sums(double n, double sx, double sy, double sxx, double syy, double sxy,
                             bool centered) {
  if (centered) {
    const double vx = n * sxx - sx * sx, vy = n * syy - sy * sy;
    if (vx <= 1e-12 * n * sxx || vy <= 1e-12 * n * syy || vx <= 0 || vy <= 0) return 0.0;
    return std::clamp((n * sxy - sx * sy) / std::sqrt(vx * vy), -1.0, 1.0);
  }
  if (sxx <= 0 || syy <= 0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// out[i] = max of in over [i - r, i + r] clipped, for a strided sequence.
void sliding_max(const float* in, float* out, int n, int stride, int r) {
  std::deque<int> dq;
  int next = 0;
  for (int i = 0; i < n; ++i) {
    const int hi = std::min(n - 1, i + r);
    while (next <= hi) {
      while (!dq.empty() && in[std::size_t(dq.back()) * stride] <= in[std::size_t(next) * stride])
        dq.pop_back();
      dq.push_back(next++);
    }
    while (dq.front() < i - r) dq.pop_front();
    out[std::size_t(i) * stride] = in[std::size_t(dq.front()) * stride];
  }
}

}  // namespace

double window_correlation(const Eigen::VectorXd& si, const Eigen::VectorXd& sj, int li, int lj,
                          int ell, bool centered) {
  const int h = ell / 2;
  if (ell < 2 || ell % 2) throw Error(ErrorCode::InvalidArgument, "window length must be even");
  if (li - h < 0 || lj - h < 0 || li + h >= si.size() || lj + h >= sj.size())
    throw Error(ErrorCode::InvalidArgument, "window leaves the profile");
  const auto x = si.segment(li - h, ell + 1);
  const auto y = sj.segment(lj - h, ell + 1);
  return window_corr_from_sums(ell + 1, x.sum(), y.sum(), x.squaredNorm(), y.squaredNorm(),
                               x.dot(y), centered);
}

std::vector<WindowMatch> pairwise_candidate_scan(const GrayImage& img_i, const GrayImage& img_j,
                                                 const ImagePoint& ai, const ImagePoint& bi,
                                                 const ImagePoint& aj, const ImagePoint& bj,
                                                 const ScanOptions& opts) {
  const int L = opts.L > 0 ? opts.L : std::max(segment_samples(ai, bi), segment_samples(aj, bj));
  const int ell = opts.ell;
  const int h = ell / 2;
  // Window starts run over 0..V-1, centres over h..L-1-h.
  const int V = L - ell;
  std::vector<WindowMatch> out;
  if (ell < 2 || V < 1) return out;

  const Eigen::VectorXd a = raw_line_samples(img_i, ai, bi, L);
  const Eigen::VectorXd b = raw_line_samples(img_j, aj, bj, L);
  const int w = ell + 1;
  std::vector<double> pa(L + 1, 0), pa2(L + 1, 0), pb(L + 1, 0), pb2(L + 1, 0);
  for (int t = 0; t < L; ++t) {
    pa[t + 1] = pa[t] + a[t];
    pa2[t + 1] = pa2[t] + a[t] * a[t];
    pb[t + 1] = pb[t] + b[t];
    pb2[t + 1] = pb2[t] + b[t] * b[t];
  }

  // C[si * V + sj]: correlation of windows starting at si and sj.
  std::vector<float> C(std::size_t(V) * V, -1.0f);
  std::vector<double> prod(L + 1);
  for (int d = -(V - 1); d <= V - 1; ++d) {
    const int t0 = std::max(0, -d), t1 = std::min(L, L - d);
    prod[t0] = 0.0;
    for (int t = t0; t < t1; ++t) prod[t + 1] = prod[t] + a[t] * b[t + d];
    const int s0 = std::max(0, -d), s1 = std::min(V - 1, V - 1 - d);
    for (int s = s0; s <= s1; ++s) {
      const double sxy = prod[s + w] - prod[s];
      const double sx = pa[s + w] - pa[s], sxx = pa2[s + w] - pa2[s];
      const double sy = pb[s + d + w] - pb[s + d], syy = pb2[s + d + w] - pb2[s + d];
      C[std::size_t(s) * V + (s + d)] =
          float(window_corr_from_sums(w, sx, sy, sxx, syy, sxy, opts.centered));
    }
  }

  const int r = opts.suppress_radius < 0 ? std::max(1, ell / 4) : opts.suppress_radius;
  std::vector<float> M;
  if (r > 0 && !opts.mutual_best) {
    std::vector<float> rowmax(C.size());
    M.resize(C.size());
    for (int s = 0; s < V; ++s)
      sliding_max(C.data() + std::size_t(s) * V, rowmax.data() + std::size_t(s) * V, V, 1, r);
    for (int c = 0; c < V; ++c) sliding_max(rowmax.data() + c, M.data() + c, V, V, r);
  }
  std::vector<int> row_best(V, -1), col_best(V, -1);
  if (opts.mutual_best) {
    for (int s = 0; s < V; ++s)
      for (int t = 0; t < V; ++t) {
        const float c = C[std::size_t(s) * V + t];
        if (row_best[s] < 0 || c > C[std::size_t(s) * V + row_best[s]]) row_best[s] = t;
        if (col_best[t] < 0 || c > C[std::size_t(col_best[t]) * V + t]) col_best[t] = s;
      }
  }

  const float thr = float(1.0 - opts.theta);
  for (int s = 0; s < V; ++s) {
    for (int t = 0; t < V; ++t) {
      const std::size_t k = std::size_t(s) * V + t;
      const float c = C[k];
      if (!(c > thr)) continue;
      if (opts.mutual_best && (row_best[s] != t || col_best[t] != s)) continue;
      if (!opts.mutual_best && r > 0 && c < M[k]) continue;
      // Recheck in double so the stored match satisfies the threshold exactly.
      const double exact = window_correlation(a, b, s + h, t + h, ell, opts.centered);
      if (!(exact > 1.0 - opts.theta)) continue;
      WindowMatch m;
      m.li = s + h;
      m.lj = t + h;
      m.corr = exact;
      m.xi = grid_point(ai, bi, m.li, L);
      m.xj = grid_point(aj, bj, m.lj, L);
      out.push_back(m);
    }
  }
  return out;
}

ClusteredSegment cluster_segment(const std::vector<double>& offsets, int ell, int k_max) {
  ClusteredSegment out;
  if (offsets.empty()) return out;
  const auto all = jenks_all_k_grouped(offsets, k_max);
  for (int k = int(all.size()); k >= 1; --k) {
    const auto& r = all[k - 1];
    bool ok = true;
    for (std::size_t c = 1; c < r.means.size(); ++c)
      if (!(r.means[c] - r.means[c - 1] > ell / 2.0)) ok = false;
    if (ok || k == 1) {
      out.means = r.means;
      out.labels = r.labels;
      break;
    }
  }
  return out;
}

namespace {

struct CliqueSearch {
  const std::vector<std::vector<char>>& adj;
  const std::vector<std::vector<int>>& nbrs;
  int min_size;
  std::size_t cap;
  std::vector<std::vector<int>> found;
  bool truncated = false;

  void run(std::vector<int>& R, std::vector<int> P, std::vector<int> X) {
    if (found.size() >= cap) {
      truncated = true;
      return;
    }
    if (int(R.size() + P.size()) < min_size) return;
    if (P.empty()) {
      if (X.empty() && int(R.size()) >= min_size) found.push_back(R);
      return;
    }
    // Pivot on the vertex of P or X with most neighbours in P.
    int pivot = -1;
    std::size_t best = 0;
    for (const auto* set : {&P, &X}) {
      for (int u : *set) {
        std::size_t c = 0;
        for (int v : P) c += adj[u][v];
        if (pivot < 0 || c > best) {
          pivot = u;
          best = c;
        }
      }
    }
    std::vector<int> todo;
    for (int v : P)
      if (!adj[pivot][v]) todo.push_back(v);
    for (int v : todo) {
      std::vector<int> P2, X2;
      for (int u : P)
        if (adj[v][u]) P2.push_back(u);
      for (int u : X)
        if (adj[v][u]) X2.push_back(u);
      R.push_back(v);
      run(R, std::move(P2), std::move(X2));
      R.pop_back();
      if (truncated) return;
      P.erase(std::find(P.begin(), P.end(), v));
      X.push_back(v);
    }
  }
};

}  // namespace

std::vector<GeoFeatureCandidate> build_candidate_set(const std::vector<ClusteredSegment>& clusters,
                                                     const std::vector<MatchLink>& links,
                                                     const LineGrid& grid, int min_size,
                                                     std::size_t max_candidates) {
  // Graph nodes are (image, cluster) pairs.
  std::vector<int> node_image, node_cluster;
  std::vector<std::vector<int>> node_of(clusters.size());
  for (std::size_t n = 0; n < clusters.size(); ++n) {
    node_of[n].resize(clusters[n].means.size());
    for (std::size_t c = 0; c < clusters[n].means.size(); ++c) {
      node_of[n][c] = int(node_image.size());
      node_image.push_back(int(n));
      node_cluster.push_back(int(c));
    }
  }
  const int V = int(node_image.size());
  // Link counts between clusters; an edge survives when each end is among the
  // most linked clusters of the other end's image.
  std::vector<std::vector<int>> count(V, std::vector<int>(V, 0));
  for (const auto& e : links) {
    if (e.image_a == e.image_b) continue;
    const int u = node_of.at(e.image_a).at(clusters[e.image_a].labels.at(e.point_a));
    const int v = node_of.at(e.image_b).at(clusters[e.image_b].labels.at(e.point_b));
    ++count[u][v];
    ++count[v][u];
  }
  // best[u][n]: largest link count from u into image n.
  std::vector<std::vector<int>> best(V, std::vector<int>(clusters.size(), 0));
  for (int u = 0; u < V; ++u)
    for (int v = 0; v < V; ++v)
      best[u][node_image[v]] = std::max(best[u][node_image[v]], count[u][v]);
  std::vector<std::vector<char>> adj(V, std::vector<char>(V, 0));
  for (int u = 0; u < V; ++u)
    for (int v = 0; v < V; ++v)
      if (count[u][v] > 0 && count[u][v] == best[u][node_image[v]] &&
          count[u][v] == best[v][node_image[u]])
        adj[u][v] = 1;
  std::vector<std::vector<int>> nbrs(V);
  std::vector<int> P;
  for (int u = 0; u < V; ++u) {
    for (int v = 0; v < V; ++v)
      if (adj[u][v]) nbrs[u].push_back(v);
    if (!nbrs[u].empty()) P.push_back(u);
  }

  CliqueSearch search{adj, nbrs, std::max(2, min_size), max_candidates, {}, false};
  std::vector<int> R;
  search.run(R, P, {});
  if (search.truncated)
    spdlog::warn("candidate enumeration stopped at {} cliques", search.found.size());

  const int lo = grid.ell / 2, hi = grid.L - 1 - grid.ell / 2;
  std::vector<GeoFeatureCandidate> out;
  out.reserve(search.found.size());
  for (auto clique : search.found) {
    std::sort(clique.begin(), clique.end(),
              [&](int u, int v) { return node_image[u] < node_image[v]; });
    GeoFeatureCandidate cand;
    cand.ell = grid.ell;
    cand.L = grid.L;
    for (int u : clique) {
      const int n = node_image[u];
      const double mean = clusters[n].means[node_cluster[u]];
      cand.images.push_back(n);
      cand.offsets.push_back(std::clamp(int(std::lround(mean)), lo, hi));
      cand.points.push_back(grid_point(grid.a.at(n), grid.b.at(n), mean, grid.L));
    }
    out.push_back(std::move(cand));
  }
  return out;
}

std::pair<double, int> evaluate_point(const Vec3& X, const GeoFeatureCandidate& cand,
                                      const std::vector<Mat34>& cams) {
  const int J = int(cand.images.size());
  if (J == 0) return {0.0, 0};
  double sum = 0;
  for (int j = 0; j < J; ++j) sum += (project(cams.at(cand.images[j]), X) - cand.points[j]).norm();
  return {sum / J, J};
}

JointFeature geo_feature_joint(const Eigen::MatrixXd& profiles, int ell, bool centered) {
  const int L = int(profiles.rows()), J = int(profiles.cols());
  if (J > 4 || L > 400) throw Error(ErrorCode::BudgetExceeded, "joint search limited to J<=4, L<=400");
  if (J < 2) throw Error(ErrorCode::InvalidArgument, "joint search needs two profiles");
  const int S = L - ell;
  if (ell < 2 || ell % 2) throw Error(ErrorCode::InvalidArgument, "window length must be even");
  if (S < 1) throw Error(ErrorCode::InvalidArgument, "window longer than the profile");

  // Pairwise window correlation tables, D[p][q][s*S+t] = 1 - corr.
  std::vector<std::vector<std::vector<double>>> D(J, std::vector<std::vector<double>>(J));
  for (int p = 0; p < J; ++p) {
    for (int q = p + 1; q < J; ++q) {
      auto& tab = D[p][q];
      tab.resize(std::size_t(S) * S);
      for (int s = 0; s < S; ++s)
        for (int t = 0; t < S; ++t)
          tab[std::size_t(s) * S + t] =
              1.0 - window_correlation(profiles.col(p), profiles.col(q), s + ell / 2, t + ell / 2,
                                       ell, centered);
    }
  }

  JointFeature best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<int> cur(J, 0);
  // Depth-first search with branch and bound on the running maximum.
  auto recurse = [&](auto&& self, int depth, double running) -> void {
    if (running >= best.objective) return;
    if (depth == J) {
      best.objective = running;
      best.starts = cur;
      return;
    }
    for (int s = 0; s < S; ++s) {
      double m = running;
      for (int p = 0; p < depth && m < best.objective; ++p)
        m = std::max(m, std::abs(D[p][depth][std::size_t(cur[p]) * S + s]));
      if (m >= best.objective) continue;
      cur[depth] = s;
      self(self, depth + 1, m);
    }
  };
  recurse(recurse, 0, 0.0);
  for (int s : best.starts) best.midpoints.push_back(s + ell / 2);
  return best;
}

PointCloud crpc(const std::vector<Mat34>& cams, const std::vector<GrayImage>& images,
                const Vec3& Xk, const Vec3& Xk2, const CrpcOptions& opts, CrpcStats* stats) {
  CrpcStats st;
  PointCloud cloud;
  const int N = int(std::min(cams.size(), images.size()));

  LineGrid grid;
  grid.a.assign(N, ImagePoint::Zero());
  grid.b.assign(N, ImagePoint::Zero());
  std::vector<int> used;
  for (int n = 0; n < N; ++n) {
    if (!opts.image_mask.empty() && (n >= int(opts.image_mask.size()) || !opts.image_mask[n]))
      continue;
    const Vec3 d1 = cams[n] * Xk.homogeneous(), d2 = cams[n] * Xk2.homogeneous();
    if (std::abs(d1.z()) < 1e-12 || std::abs(d2.z()) < 1e-12) continue;
    const ImagePoint a = d1.hnormalized(), b = d2.hnormalized();
    if (!images[n].exists(a) || !images[n].exists(b)) continue;
    grid.a[n] = a;
    grid.b[n] = b;
    grid.L = std::max(grid.L, segment_samples(a, b));
    used.push_back(n);
  }
  st.images_used = int(used.size());
  if (used.size() < 2) {
    if (stats) *stats = st;
    return cloud;
  }
  grid.ell = round_even(opts.ell_frac * grid.L);
  st.L = grid.L;
  st.ell = grid.ell;

  std::vector<std::vector<double>> positions(N);
  std::vector<MatchLink> links;
  for (std::size_t x = 0; x < used.size(); ++x) {
    for (std::size_t y = x + 1; y < used.size(); ++y) {
      const int i = used[x], j = used[y];
      ++st.pairs_tested;
      try {
        const auto sim = similar_pair(images[i], images[j], grid.a[i], grid.b[i], grid.a[j],
                                      grid.b[j], opts.theta, opts.centered);
        if (!sim.similar) continue;
        ++st.pairs_similar;
        ScanOptions so;
        so.theta = opts.theta;
        so.ell = grid.ell;
        so.L = grid.L;
        so.centered = opts.centered;
        const auto matches =
            pairwise_candidate_scan(images[i], images[j], grid.a[i], grid.b[i], grid.a[j],
                                    grid.b[j], so);
        for (const auto& m : matches) {
          links.push_back({i, int(positions[i].size()), j, int(positions[j].size())});
          positions[i].push_back(m.li);
          positions[j].push_back(m.lj);
        }
      } catch (const Error& e) {
        spdlog::debug("pair ({}, {}) skipped: {}", i, j, e.what());
      }
    }
  }
  st.raw_matches = links.size();

  std::vector<ClusteredSegment> clusters(N);
  for (int n : used) clusters[n] = cluster_segment(positions[n], grid.ell, opts.k_max);

  const auto cands =
      build_candidate_set(clusters, links, grid, std::max(2, opts.tau_i), opts.max_candidates);
  st.candidates = cands.size();

  for (const auto& cand : cands) {
    std::vector<Mat34> sub;
    for (int n : cand.images) sub.push_back(cams[n]);
    try {
      const Vec3 X = triangulate(sub, cand.points);
      const auto [ed, ei] = evaluate_point(X, cand, cams);
      if (!(ed <= opts.tau_d) || ei < opts.tau_i || ei < 2) continue;
      CloudPoint p;
      p.position = X;
      p.e_d = ed;
      p.e_i = ei;
      p.views = cand.images;
      cloud.push_back(std::move(p));
    } catch (const Error& e) {
      spdlog::debug("candidate skipped: {}", e.what());
    }
  }
  st.emitted = cloud.size();
  if (stats) *stats = st;
  return cloud;
}

}  // namespace geocloud
