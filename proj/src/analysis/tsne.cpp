#include "helix/analysis/tsne.hpp"

#include <cmath>
#include <stdexcept>
#include <limits>
#include <string>

#include "helix/numerics/rng.hpp"

namespace helix::analysis {

namespace {

Matrix squared_distances(const Matrix& x) {
  const std::size_t n = x.rows();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      const auto a = x.row(i);
      const auto b = x.row(j);
      for (std::size_t c = 0; c < x.cols(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
      d(i, j) = d(j, i) = s;
    }
  return d;
}

/// Row i of the conditional distribution for precision beta; returns the entropy.
double conditional_row(const Matrix& d, std::size_t i, double beta, std::vector<double>& p) {
  const std::size_t n = d.rows();
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) dmin = std::min(dmin, d(i, j));
  double z = 0.0, dot = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    p[j] = j == i ? 0.0 : std::exp(-beta * (d(i, j) - dmin));
    z += p[j];
  }
  for (std::size_t j = 0; j < n; ++j) {
    p[j] /= z;
    dot += p[j] * (d(i, j) - dmin);
  }
  return std::log(z) + beta * dot;
}

}  // namespace

Matrix tsne_joint_probabilities(const Matrix& x, double perplexity) {
  const std::size_t n = x.rows();
  if (n < 2) throw std::invalid_argument("tsne: need at least 2 points");
  if (!(perplexity >= 1.0) || perplexity > static_cast<double>(n - 1))
    throw std::invalid_argument("tsne: perplexity " + std::to_string(perplexity) + " is infeasible for n=" +
                                std::to_string(n) + " (must be in [1, n-1])");
  const Matrix d = squared_distances(x);
  const double target = std::log(perplexity);
  Matrix cond(n, n);
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
      const double h = conditional_row(d, i, beta, p);
      if (std::abs(h - target) < 1e-5) break;
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    conditional_row(d, i, beta, p);
    std::copy(p.begin(), p.end(), cond.row(i).begin());
  }
  Matrix joint(n, n);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) joint(i, j) = std::max((cond(i, j) + cond(j, i)) / denom, 1e-300);
  return joint;
}

TsneResult tsne(const Matrix& x, const TsneOptions& options) {
  const std::size_t n = x.rows();
  if (n > 5000) throw std::invalid_argument("tsne: exact t-SNE is limited to 5000 points, got " + std::to_string(n));
  if (n < 3) throw std::invalid_argument("tsne: need at least 3 points");
  numerics::require_finite(x, "tsne");
  const double perp = options.perplexity;
  if (options.strict && (perp < 5.0 || perp > static_cast<double>(n - 1) / 3.0))
    throw std::invalid_argument("tsne: perplexity " + std::to_string(perp) + " outside [5, (n-1)/3] for n=" +
                                std::to_string(n));
  const Matrix p = tsne_joint_probabilities(x, perp);

  numerics::Rng rng(options.seed);
  Matrix y(n, 2);
  for (double& v : y.values()) v = 1e-4 * rng.normal();
  Matrix update(n, 2), gains(n, 2, 1.0), grad(n, 2), num(n, n);

  auto kl_of = [&](const Matrix& yy) {
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) {
          const double dx = yy(i, 0) - yy(j, 0), dy = yy(i, 1) - yy(j, 1);
          num(i, j) = 1.0 / (1.0 + dx * dx + dy * dy);
          z += num(i, j);
        }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) kl += p(i, j) * std::log(p(i, j) / std::max(num(i, j) / z, 1e-300));
    return kl;
  };

  TsneResult out;
  out.kl_trace.emplace_back(0, kl_of(y));
  for (std::size_t it = 0; it < options.iterations; ++it) {
    const bool early = it < options.exaggeration_iters;
    const double exag = early ? options.exaggeration : 1.0;
    const double momentum = early ? options.initial_momentum : options.final_momentum;
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
        num(i, j) = num(j, i) = 1.0 / (1.0 + dx * dx + dy * dy);
        z += 2.0 * num(i, j);
      }
    for (std::size_t i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = (exag * p(i, j) - num(i, j) / z) * num(i, j);
        gx += w * (y(i, 0) - y(j, 0));
        gy += w * (y(i, 1) - y(j, 1));
      }
      grad(i, 0) = 4.0 * gx;
      grad(i, 1) = 4.0 * gy;
    }
    double mean[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 2; ++c) {
        double& g = gains(i, c);
        g = (grad(i, c) > 0.0) != (update(i, c) > 0.0) ? g + 0.2 : g * 0.8;
        g = std::max(g, 0.01);
        update(i, c) = momentum * update(i, c) - options.learning_rate * g * grad(i, c);
        y(i, c) += update(i, c);
        mean[c] += y(i, c);
      }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 2; ++c) y(i, c) -= mean[c] / static_cast<double>(n);
    const std::size_t done = it + 1;
    if ((options.kl_every && done % options.kl_every == 0) || done == options.iterations) {
      const double kl = kl_of(y);
      if (!std::isfinite(kl)) throw std::runtime_error("tsne: KL divergence became non-finite at iteration " + std::to_string(done));
      out.kl_trace.emplace_back(done, kl);
    }
  }
  out.embedding = std::move(y);
  return out;
}

}  // namespace helix::analysis
