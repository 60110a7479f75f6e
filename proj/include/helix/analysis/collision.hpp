#pragma once

#include <utility>
#include <vector>

#include "helix/model/transformer.hpp"

namespace helix::analysis {

using numerics::Matrix;
using model::TokenId;

/// (token, position) of one combined vector.
using GridKey = std::pair<TokenId, std::size_t>;

struct CollisionReport {
  double min_distance = 0.0;
  /// 1st percentile of all pairwise distances between distinct keys.
  double p01_distance = 0.0;
  std::size_t pairs = 0;
  GridKey argmin_a{};
  GridKey argmin_b{};
};

/// Pairwise Euclidean distances between rows whose keys differ. Throws if
/// fewer than two distinct keys are present.
CollisionReport collision_audit(const Matrix& vectors, const std::vector<GridKey>& keys);

struct CombinedGrid {
  Matrix vectors;
  std::vector<GridKey> keys;
};

/// Combiner output (no dropout) for every token in `tokens` at positions
/// 0..positions-1 on the chosen side of the model.
CombinedGrid combined_grid(const model::TransformerModel& model, bool source_side, const std::vector<TokenId>& tokens,
                           std::size_t positions);

}  // namespace helix::analysis
