#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "helix/corpus/vocab.hpp"
#include "helix/numerics/matrix.hpp"

namespace helix::analysis {

using numerics::Matrix;

/// Per-row annotations for a CSV of projected points. Empty vectors are
/// written as empty columns.
struct PointMeta {
  std::vector<std::size_t> sentence;
  std::vector<std::size_t> position;
  std::vector<corpus::TokenId> token;
  std::vector<corpus::PosTag> tag;
  std::vector<std::size_t> cluster;
  /// Resolves token ids to words when set.
  const corpus::Vocab* vocab = nullptr;
};

/// Header "sentence,position,token,word,tag,cluster,x0,x1,...". Words are
/// quoted when they contain a comma or a quote.
void write_points_csv(std::ostream& out, const Matrix& points, const PointMeta& meta);

/// Header "row,x0,x1,..."; one line per matrix row.
void write_matrix_csv(std::ostream& out, const Matrix& m);

std::string csv_escape(const std::string& field);

}  // namespace helix::analysis
