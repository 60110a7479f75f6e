#include "helix/model/decode.hpp"

#include <algorithm>
#include <cmath>

#include "helix/numerics/ops.hpp"

namespace helix::model {

namespace num = helix::numerics;

combiner::CombinerStrategy combiner_strategy(const TransformerModel& model, bool source_side) {
  const auto& cfg = model.config();
  const auto& comb = source_side ? cfg.source_combiner : cfg.target_combiner;
  switch (comb.kind) {
    case combiner::CombinerKind::straight_add: return combiner::StraightAdd{};
    case combiner::CombinerKind::weighted_sum: return combiner::WeightedSum{comb.weight};
    case combiner::CombinerKind::linear_add: {
      const auto& wc = source_side ? model.index().src_wc : model.index().tgt_wc;
      return combiner::LinearAdd{model.value(*wc), comb.dropout_rate.value_or(cfg.dropout), comb.input};
    }
  }
  throw std::invalid_argument("unknown combiner kind");
}

namespace {

std::size_t argmax_row(const Matrix& m, std::size_t r) {
  const auto row = m.row(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

/// Row-growing key/value store for one attention sublayer.
struct Cache {
  Matrix k;
  Matrix v;
};

void append_row(Matrix& m, const Matrix& row) {
  std::vector<double> data(m.values().begin(), m.values().end());
  data.insert(data.end(), row.values().begin(), row.values().end());
  m = Matrix(m.rows() + 1, row.cols(), std::move(data));
}

/// One query row attending over all cached keys, heads concatenated, then W^O.
Matrix attend(const Matrix& q, const Cache& c, const Matrix& wo, std::size_t heads) {
  const std::size_t dk = q.cols() / heads;
  const Matrix mask(1, c.k.rows());
  Matrix concat;
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix o = attention_core(num::slice_cols(q, h * dk, dk), num::slice_cols(c.k, h * dk, dk),
                              num::slice_cols(c.v, h * dk, dk), mask);
    concat = concat.empty() ? std::move(o) : num::concat_cols(concat, o);
  }
  return num::matmul(concat, wo);
}

std::vector<TokenId> decode_incremental(const TransformerModel& model, const std::vector<TokenId>& source,
                                        std::size_t steps) {
  const auto& cfg = model.config();
  const auto& ix = model.index();
  const Matrix memory = encoder_forward(model, TokenBlock::single(source), false, 0).output;
  const auto strategy = combiner_strategy(model, false);
  const double eps = cfg.layer_norm_eps;

  std::vector<Cache> self(cfg.num_layers);
  std::vector<Cache> cross(cfg.num_layers);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto& a = ix.decoder[l].cross;
    cross[l] = {num::matmul(memory, model.value(a.wk)), num::matmul(memory, model.value(a.wv))};
  }

  std::vector<TokenId> out;
  TokenId current = corpus::kStart;
  const Matrix& embed = model.value(ix.tgt_embed);
  for (std::size_t t = 0; t < steps; ++t) {
    Matrix s(1, cfg.d_model);
    const auto src_row = embed.row(static_cast<std::size_t>(current));
    const double scale = std::sqrt(static_cast<double>(cfg.d_model));
    for (std::size_t c = 0; c < cfg.d_model; ++c) s(0, c) = src_row[c] * scale;
    Matrix y = combiner::combine(s, num::slice_rows(model.positions().table(), t, 1), strategy, false, 0);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const auto& e = ix.decoder[l];
      const Matrix q = num::matmul(y, model.value(e.self.wq));
      if (self[l].k.empty()) {
        self[l] = {num::matmul(y, model.value(e.self.wk)), num::matmul(y, model.value(e.self.wv))};
      } else {
        append_row(self[l].k, num::matmul(y, model.value(e.self.wk)));
        append_row(self[l].v, num::matmul(y, model.value(e.self.wv)));
      }
      const Matrix a = attend(q, self[l], model.value(e.self.wo), cfg.num_heads);
      y = num::layer_norm(num::add(y, a), model.value(e.ln1.gamma), model.value(e.ln1.beta), eps);
      const Matrix cq = num::matmul(y, model.value(e.cross.wq));
      const Matrix ca = attend(cq, cross[l], model.value(e.cross.wo), cfg.num_heads);
      y = num::layer_norm(num::add(y, ca), model.value(e.ln2.gamma), model.value(e.ln2.beta), eps);
      const Matrix h = num::relu(num::add_row(num::matmul(y, model.value(e.ffn.w1)), model.value(e.ffn.b1)));
      const Matrix f = num::add_row(num::matmul(h, model.value(e.ffn.w2)), model.value(e.ffn.b2));
      y = num::layer_norm(num::add(y, f), model.value(e.ln3.gamma), model.value(e.ln3.beta), eps);
    }
    const Matrix logits = num::add_row(num::matmul(y, model.value(ix.out_w)), model.value(ix.out_b));
    current = static_cast<TokenId>(argmax_row(logits, 0));
    out.push_back(current);
    if (current == corpus::kEnd) break;
  }
  return out;
}

std::vector<TokenId> decode_full(const TransformerModel& model, const std::vector<TokenId>& source,
                                 std::size_t steps) {
  const TokenBlock src = TokenBlock::single(source);
  const Matrix memory = encoder_forward(model, src, false, 0).output;
  std::vector<TokenId> prefix{corpus::kStart};
  std::vector<TokenId> out;
  for (std::size_t t = 0; t < steps; ++t) {
    const auto logits = decoder_forward(model, TokenBlock::single(prefix), memory, src.lengths, src.len, false, 0).logits;
    const auto next = static_cast<TokenId>(argmax_row(logits, logits.rows() - 1));
    out.push_back(next);
    if (next == corpus::kEnd) break;
    prefix.push_back(next);
  }
  return out;
}

}  // namespace

std::vector<TokenId> greedy_decode(const TransformerModel& model, const std::vector<TokenId>& source,
                                   std::size_t max_len, DecodeMode mode) {
  const std::size_t steps = std::min(max_len, model.config().max_len);
  if (mode == DecodeMode::full) return decode_full(model, source, steps);
  return decode_incremental(model, source, steps);
}

}  // namespace helix::model
