#pragma once

#include <functional>
#include <map>
#include <vector>

#include "helix/model/probe.hpp"

namespace helix::analysis {

using numerics::Matrix;
using model::TokenId;

/// Per-position mean over all sentences ("average sentence") at one probe.
struct PositionalProfile {
  model::ProbePoint probe;
  /// Row p is the mean vector at position p.
  Matrix means;
  std::vector<std::size_t> counts;

  std::size_t length() const noexcept { return counts.size(); }
};

/// Positions are kept from 0 up to (excluding) the first one with fewer than
/// min_count records. Means are accumulated incrementally, so identical
/// inputs reproduce exactly.
PositionalProfile distill_positions(const model::ProbeRecords& records, const model::ProbePoint& probe,
                                    std::size_t min_count);
PositionalProfile distill_positions(const model::EmbeddingDump& dump, const model::ProbePoint& probe,
                                    std::size_t min_count);

using TokenFilter = std::function<bool(TokenId)>;

struct DeltaVectors {
  /// Index into the source ProbeRecords for each kept row.
  std::vector<std::size_t> record;
  std::vector<std::size_t> sentence;
  std::vector<std::size_t> position;
  std::vector<TokenId> token;
  std::vector<corpus::PosTag> tag;
  /// Record vector minus the profile row at its position.
  Matrix single;
  /// Single-delta minus the token's semantic vector; zero for tokens seen once.
  Matrix double_delta;
  /// Mean single-delta per token, for tokens with at least two occurrences.
  std::map<TokenId, std::vector<double>> semantic;

  std::size_t size() const noexcept { return record.size(); }
};

/// Records past the profile length or rejected by the filter are dropped.
/// An empty filter keeps every record.
DeltaVectors delta_decompose(const model::ProbeRecords& records, const PositionalProfile& profile,
                             const TokenFilter& filter = {});

/// Rows of a matrix selected by index.
Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& rows);

}  // namespace helix::analysis
