#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "helix/numerics/matrix.hpp"

namespace helix::analysis {

using numerics::Matrix;

struct TsneOptions {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::size_t kl_every = 50;
  /// When set, perplexity must lie in [5, (n-1)/3]. When cleared, any
  /// perplexity in [1, n-1] is accepted, which admits very small inputs.
  bool strict = true;
};

struct TsneResult {
  /// n×2.
  Matrix embedding;
  /// (iteration, KL(P || Q)) at iteration 0, every kl_every iterations, and at the end.
  std::vector<std::pair<std::size_t, double>> kl_trace;

  double initial_kl() const { return kl_trace.front().second; }
  double final_kl() const { return kl_trace.back().second; }
};

/// Exact t-SNE: per-point bandwidths by bisection on the perplexity, symmetric
/// joint P, Student-t Q, gradient descent with momentum and adaptive gains.
/// Rejects n > 5000 and infeasible perplexities.
TsneResult tsne(const Matrix& x, const TsneOptions& options = {});

/// Joint probabilities used by tsne (exposed for testing); rows sum to 1/n.
Matrix tsne_joint_probabilities(const Matrix& x, double perplexity);

}  // namespace helix::analysis
