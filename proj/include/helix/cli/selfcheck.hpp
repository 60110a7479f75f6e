#pragma once

#include <cstdint>
#include <string>

namespace helix::cli {

struct CheckResult {
  bool pass = false;
  /// Worst measured value against the threshold.
  double value = 0.0;
  std::string detail;
};

/// Row norms and offset-only inner products of the d_model table over
/// p, q < 200 and offsets below 50, tolerance 1e-9.
CheckResult check_pe_identities(std::size_t d_model = 128);

/// Finite-difference checks of every tape primitive and of the full tiny
/// model (d_model 8, one layer, each combiner), relative error below 1e-4.
CheckResult check_gradient_fidelity();

/// Exact causality, padding invariance within 1e-9 and identical
/// incremental/full greedy decoding on small random models.
CheckResult check_model_invariants();

/// K-Means++ against the exhaustive best 2-partition (n <= 8, 100 instances)
/// and PCA against characteristic-polynomial eigenvalues of 3×3 covariances.
CheckResult check_oracle_equivalences(std::uint64_t seed = 0);

/// Two far blobs: final KL below initial and inter-blob distance above 3×
/// the intra-blob spread in the embedding.
CheckResult check_tsne_two_blobs(std::uint64_t seed = 0);

}  // namespace helix::cli
