#pragma once

#include <vector>

#include "helix/numerics/matrix.hpp"

namespace helix::numerics {

struct EigenDecomposition {
  /// Descending.
  std::vector<double> values;
  /// Column i is the unit eigenvector for values[i].
  Matrix vectors;
};

/// Cyclic Jacobi rotations on a symmetric matrix. Rejects inputs whose
/// asymmetry exceeds 1e-10 · max(1, max|c|).
EigenDecomposition sym_eigen(const Matrix& c);

}  // namespace helix::numerics
