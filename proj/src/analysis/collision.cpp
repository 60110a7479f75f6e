#include "helix/analysis/collision.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "helix/model/decode.hpp"
#include "helix/numerics/ops.hpp"

namespace helix::analysis {

CollisionReport collision_audit(const Matrix& vectors, const std::vector<GridKey>& keys) {
  if (keys.size() != vectors.rows()) throw std::invalid_argument("collision_audit: one key per row required");
  CollisionReport out;
  std::vector<double> all;
  bool found = false;
  for (std::size_t i = 0; i < vectors.rows(); ++i)
    for (std::size_t j = i + 1; j < vectors.rows(); ++j) {
      if (keys[i] == keys[j]) continue;
      double s = 0.0;
      const auto a = vectors.row(i);
      const auto b = vectors.row(j);
      for (std::size_t c = 0; c < vectors.cols(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
      const double d = std::sqrt(s);
      all.push_back(d);
      if (!found || d < out.min_distance) {
        found = true;
        out.min_distance = d;
        out.argmin_a = keys[i];
        out.argmin_b = keys[j];
      }
    }
  if (!found) throw std::invalid_argument("collision_audit: need at least two distinct (token, position) keys");
  out.pairs = all.size();
  const auto nth = all.begin() + static_cast<std::ptrdiff_t>(std::floor(0.01 * static_cast<double>(all.size() - 1)));
  std::nth_element(all.begin(), nth, all.end());
  out.p01_distance = *nth;
  return out;
}

CombinedGrid combined_grid(const model::TransformerModel& model, bool source_side, const std::vector<TokenId>& tokens,
                           std::size_t positions) {
  const auto& cfg = model.config();
  if (positions == 0 || positions > cfg.max_len)
    throw std::invalid_argument("combined_grid: positions must be in [1, " + std::to_string(cfg.max_len) + "]");
  const Matrix& embed = model.param(source_side ? "src.embed" : "tgt.embed");
  const auto strategy = model::combiner_strategy(model, source_side);
  const double scale = std::sqrt(static_cast<double>(cfg.d_model));
  CombinedGrid out;
  Matrix s(tokens.size() * positions, cfg.d_model);
  Matrix p(tokens.size() * positions, cfg.d_model);
  std::size_t r = 0;
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= embed.rows())
      throw std::out_of_range("combined_grid: token " + std::to_string(t) + " outside the vocabulary");
    for (std::size_t pos = 0; pos < positions; ++pos, ++r) {
      for (std::size_t c = 0; c < cfg.d_model; ++c) {
        s(r, c) = embed(static_cast<std::size_t>(t), c) * scale;
        p(r, c) = model.positions().table()(pos, c);
      }
      out.keys.emplace_back(t, pos);
    }
  }
  out.vectors = combiner::combine(s, p, strategy, false, 0);
  return out;
}

}  // namespace helix::analysis
