#include "helix/analysis/clustering.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <thread>

#include "helix/numerics/rng.hpp"

namespace helix::analysis {

namespace {

double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Nearest centroid for every row, keeping the current label on ties; returns the inertia.
double assign(const Matrix& x, const Matrix& c, std::vector<std::size_t>& labels, std::vector<double>& d2) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::size_t best = labels[i];
    double bd = dist2(x.row(i), c.row(best));
    for (std::size_t j = 0; j < c.rows(); ++j) {
      const double dj = dist2(x.row(i), c.row(j));
      if (dj < bd) {
        bd = dj;
        best = j;
      }
    }
    labels[i] = best;
    d2[i] = bd;
    total += bd;
  }
  return total;
}

Matrix seed_centroids(const Matrix& x, std::size_t k, numerics::Rng& rng) {
  const std::size_t n = x.rows();
  Matrix c(k, x.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (std::size_t j = 0; j < k; ++j) {
    if (j > 0) {
      double total = 0.0;
      for (double v : d2) total += v;
      if (total <= 0.0) {
        pick = static_cast<std::size_t>(rng.below(n));
      } else {
        double r = rng.uniform() * total;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          r -= d2[i];
          if (r < 0.0) {
            pick = i;
            break;
          }
        }
      }
    }
    const auto src = x.row(pick);
    std::copy(src.begin(), src.end(), c.row(j).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], dist2(x.row(i), c.row(j)));
  }
  return c;
}

ClusterModel lloyd(const Matrix& x, std::size_t k, std::size_t max_iter, numerics::Rng rng) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  ClusterModel m;
  m.k = k;
  m.centroids = seed_centroids(x, k, rng);
  m.assignments.assign(n, 0);
  std::vector<double> d2(n);
  m.inertia_trace.push_back(assign(x, m.centroids, m.assignments, d2));
  std::vector<std::size_t> counts(k);
  std::vector<std::size_t> next(n);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    m.centroids.fill(0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[m.assignments[i]];
      auto c = m.centroids.row(m.assignments[i]);
      const auto r = x.row(i);
      for (std::size_t t = 0; t < d; ++t) c[t] += r[t];
    }
    for (std::size_t j = 0; j < k; ++j)
      if (counts[j] > 0)
        for (double& v : m.centroids.row(j)) v /= static_cast<double>(counts[j]);
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i)
        if (counts[m.assignments[i]] > 1 && (far == n || d2[i] > d2[far])) far = i;
      if (far == n) break;
      --counts[m.assignments[far]];
      m.assignments[far] = j;
      counts[j] = 1;
      d2[far] = 0.0;
      const auto r = x.row(far);
      std::copy(r.begin(), r.end(), m.centroids.row(j).begin());
    }
    ++m.iterations;
    next = m.assignments;
    m.inertia_trace.push_back(assign(x, m.centroids, next, d2));
    const bool stable = next == m.assignments;
    m.assignments.swap(next);
    if (stable) break;
  }
  m.inertia = m.inertia_trace.back();
  return m;
}

}  // namespace

double inertia(const Matrix& x, const Matrix& centroids, const std::vector<std::size_t>& assignments) {
  if (assignments.size() != x.rows()) throw std::invalid_argument("inertia: one assignment per row required");
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) s += dist2(x.row(i), centroids.row(assignments[i]));
  return s;
}

ClusterModel kmeans_pp(const Matrix& x, std::size_t k, const KMeansOptions& options) {
  if (k == 0) throw std::invalid_argument("kmeans_pp: k must be at least 1");
  if (x.rows() < k)
    throw std::invalid_argument("kmeans_pp: " + std::to_string(x.rows()) + " points cannot form " + std::to_string(k) +
                                " clusters");
  numerics::require_finite(x, "kmeans_pp");
  const std::size_t restarts = std::max<std::size_t>(1, options.n_init);
  std::vector<ClusterModel> runs(restarts);
  std::size_t threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options.threads;
  threads = std::min(threads, restarts);
  if (threads <= 1) {
    for (std::size_t r = 0; r < restarts; ++r) runs[r] = lloyd(x, k, options.max_iter, numerics::Rng::derive(options.seed, r));
  } else {
    std::atomic<std::size_t> cursor{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t r = cursor++; r < restarts; r = cursor++)
          runs[r] = lloyd(x, k, options.max_iter, numerics::Rng::derive(options.seed, r));
      });
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < restarts; ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;
  ClusterModel out = std::move(runs[best]);
  out.seed = options.seed;
  out.n_init = restarts;
  return out;
}

ElbowResult elbow_select(const Matrix& x, std::size_t k_max, const KMeansOptions& options) {
  if (k_max < 3) throw std::invalid_argument("elbow_select: k_max must be at least 3");
  if (x.rows() < k_max) throw std::invalid_argument("elbow_select: fewer points than k_max");
  ElbowResult out;
  for (std::size_t k = 1; k <= k_max; ++k) out.inertia.push_back(kmeans_pp(x, k, options).inertia);
  out.curvature.assign(k_max, 0.0);
  const double base = out.inertia[0];
  if (base <= 0.0) {
    out.suggested_k = 1;
    out.low_confidence = true;
    return out;
  }
  auto drop = [&](std::size_t k) { return out.inertia[k - 2] - out.inertia[k - 1]; };
  for (std::size_t k = 2; k < k_max; ++k) {
    const double dk = drop(k);
    if (dk > 1e-12 * base) out.curvature[k - 1] = (dk - drop(k + 1)) / dk;
  }
  std::size_t arg = 2;
  for (std::size_t k = 3; k < k_max; ++k)
    if (out.curvature[k - 1] > out.curvature[arg - 1]) arg = k;
  out.suggested_k = arg;
  const double peak = out.curvature[arg - 1];
  if (peak < 0.5 && 1.0 - out.inertia[k_max - 1] / base < 0.8) {
    out.suggested_k = k_max;
    out.boundary = true;
  }
  const double explained = 1.0 - out.inertia[out.suggested_k - 1] / base;
  out.low_confidence = peak < 0.5 || explained < 0.8;
  return out;
}

double silhouette(const Matrix& x, const std::vector<std::size_t>& assignments) {
  const std::size_t n = x.rows();
  if (assignments.size() != n) throw std::invalid_argument("silhouette: one assignment per row required");
  std::size_t k = 0;
  for (std::size_t a : assignments) k = std::max(k, a + 1);
  if (k < 2) throw std::invalid_argument("silhouette: at least 2 clusters required");
  std::vector<std::size_t> size(k, 0);
  for (std::size_t a : assignments) ++size[a];
  for (std::size_t j = 0; j < k; ++j)
    if (size[j] == 0) throw std::invalid_argument("silhouette: cluster " + std::to_string(j) + " is empty");

  double total = 0.0;
  std::vector<double> sums(k);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t own = assignments[i];
    if (size[own] == 1) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sums[assignments[j]] += std::sqrt(dist2(x.row(i), x.row(j)));
    const double a = sums[own] / static_cast<double>(size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != own) b = std::min(b, sums[c] / static_cast<double>(size[c]));
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

TwoStageResult two_stage_clustering(const Matrix& x, const KMeansOptions& options, const std::vector<int>* labels,
                                    int marker, std::optional<std::size_t> verboid) {
  TwoStageResult out;
  out.stage1 = kmeans_pp(x, 3, options);
  if (labels) {
    if (labels->size() != x.rows()) throw std::invalid_argument("two_stage_clustering: one label per row required");
    std::vector<double> hits(3, 0.0), size(3, 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      size[out.stage1.assignments[i]] += 1.0;
      if ((*labels)[i] == marker) hits[out.stage1.assignments[i]] += 1.0;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c)
      if (hits[c] / std::max(1.0, size[c]) > hits[best] / std::max(1.0, size[best])) best = c;
    out.verboid = best;
  } else if (verboid) {
    if (*verboid >= 3) throw std::invalid_argument("two_stage_clustering: verboid cluster must be 0, 1 or 2");
    out.verboid = *verboid;
  } else {
    throw std::invalid_argument("two_stage_clustering: either labels or a verboid cluster index is required");
  }
  for (std::size_t i = 0; i < x.rows(); ++i)
    if (out.stage1.assignments[i] == out.verboid) out.members.push_back(i);
  if (out.members.size() < 4)
    throw std::invalid_argument("two_stage_clustering: verboid cluster has " + std::to_string(out.members.size()) +
                                " points, at least 4 required");
  Matrix sub(out.members.size(), x.cols());
  for (std::size_t i = 0; i < out.members.size(); ++i) {
    const auto r = x.row(out.members[i]);
    std::copy(r.begin(), r.end(), sub.row(i).begin());
  }
  out.stage2 = kmeans_pp(sub, 2, options);
  return out;
}

ClusterScores cluster_eval(const std::vector<std::size_t>& assignments, const std::vector<int>& truth) {
  if (assignments.size() != truth.size())
    throw std::invalid_argument("cluster_eval: " + std::to_string(assignments.size()) + " assignments vs " +
                                std::to_string(truth.size()) + " labels");
  if (truth.empty()) throw std::invalid_argument("cluster_eval: no points");
  std::map<std::pair<std::size_t, int>, double> table;
  std::map<std::size_t, double> rows;
  std::map<int, double> cols;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    table[{assignments[i], truth[i]}] += 1.0;
    rows[assignments[i]] += 1.0;
    cols[truth[i]] += 1.0;
  }
  const double n = static_cast<double>(truth.size());
  std::map<std::size_t, double> best;
  for (const auto& [key, count] : table) best[key.first] = std::max(best[key.first], count);
  ClusterScores out;
  for (const auto& [c, v] : best) out.purity += v;
  out.purity /= n;

  auto comb2 = [](double v) { return v * (v - 1.0) / 2.0; };
  double index = 0.0, a = 0.0, b = 0.0;
  for (const auto& [key, count] : table) index += comb2(count);
  for (const auto& [key, count] : rows) a += comb2(count);
  for (const auto& [key, count] : cols) b += comb2(count);
  if (n < 2.0) {
    out.ari = 1.0;
    return out;
  }
  const double expected = a * b / comb2(n);
  const double max_index = 0.5 * (a + b);
  out.ari = max_index == expected ? 1.0 : (index - expected) / (max_index - expected);
  return out;
}

}  // namespace helix::analysis
