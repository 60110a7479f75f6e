#pragma once

#include <vector>

#include "helix/numerics/matrix.hpp"

namespace helix::analysis {

using numerics::Matrix;

struct DigramSet {
  /// One row per di-gram: [z(first) | z(second)].
  Matrix features;
  /// Row indices into the input of the current and the next token.
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

/// Pairs every row with the row holding the same sentence at the next
/// position, when both are present. Input rows are the reduced vectors of
/// tokens that already passed the token filter.
DigramSet digram_features(const Matrix& z, const std::vector<std::size_t>& sentence,
                          const std::vector<std::size_t>& position);

}  // namespace helix::analysis
