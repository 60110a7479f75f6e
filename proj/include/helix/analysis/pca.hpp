#pragma once

#include <vector>

#include "helix/numerics/matrix.hpp"

namespace helix::analysis {

using numerics::Matrix;

/// Covariance PCA without standardization.
struct PcaModel {
  std::vector<double> mean;
  /// k×d, orthonormal rows in descending variance order. The largest-magnitude
  /// entry of each row is positive.
  Matrix components;
  std::vector<double> explained_variance;
  /// Variance of each component over the total variance (trace of the covariance).
  std::vector<double> explained_variance_ratio;
  double total_variance = 0.0;

  std::size_t k() const noexcept { return components.rows(); }
  /// Sum of the first m ratios.
  double share(std::size_t m) const;
};

/// Requires n >= 2 and 1 <= k <= min(n, d).
PcaModel pca_fit(const Matrix& x, std::size_t k);
/// (x - mean) · componentsᵀ.
Matrix pca_transform(const PcaModel& pca, const Matrix& x);
/// Inverse map of pca_transform.
Matrix pca_reconstruct(const PcaModel& pca, const Matrix& z);

}  // namespace helix::analysis
