#pragma once

#include <vector>

#include "helix/model/transformer.hpp"

namespace helix::model {

enum class DecodeMode {
  /// Keys and values of earlier positions are cached; each step runs one row.
  incremental,
  /// The whole prefix is re-run every step and only the last row is read.
  full,
};

/// Greedy generation from <start>. Returns the generated ids (without
/// <start>), ending with <end> if it was produced within max_len steps.
/// max_len is capped so the decoder input never exceeds the model's max_len.
std::vector<TokenId> greedy_decode(const TransformerModel& model, const std::vector<TokenId>& source,
                                   std::size_t max_len, DecodeMode mode = DecodeMode::incremental);

/// The combiner of one side as a plain strategy (LinearAdd carries a copy of W_c).
combiner::CombinerStrategy combiner_strategy(const TransformerModel& model, bool source_side);

}  // namespace helix::model
