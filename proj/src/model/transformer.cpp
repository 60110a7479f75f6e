#include "helix/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "helix/numerics/ops.hpp"
#include "helix/numerics/rng.hpp"

namespace helix::model {

namespace num = helix::numerics;

namespace {

Matrix glorot(std::size_t rows, std::size_t cols, num::Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& x : m.values()) x = rng.uniform(-limit, limit);
  return m;
}

Matrix uniform(std::size_t rows, std::size_t cols, double a, num::Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.values()) x = rng.uniform(-a, a);
  return m;
}

}  // namespace

TransformerModel::TransformerModel(TransformerConfig config, std::uint64_t seed)
    : config_((config.validate(), std::move(config))),
      positions_(config_.max_len, config_.d_model, config_.pe_base) {
  const std::size_t d = config_.d_model;
  const std::size_t ff = config_.d_ff;
  std::uint64_t stream = 0;
  auto rng = [&] { return num::Rng::derive(seed, stream++); };

  {
    auto r = rng();
    index_.src_embed = add("src.embed", uniform(config_.source_vocab, d, config_.embed_init, r));
  }
  {
    auto r = rng();
    index_.tgt_embed = add("tgt.embed", uniform(config_.target_vocab, d, config_.embed_init, r));
  }
  const std::uint64_t wc_seed = num::Rng::derive(seed, 0x7763).next();
  if (config_.source_combiner.kind == combiner::CombinerKind::linear_add) {
    index_.src_wc = add("src.combiner.wc", combiner::init_linear_add_weights(d, wc_seed, config_.linear_add_noise,
                                                                             config_.source_combiner.input));
  }
  if (config_.target_combiner.kind == combiner::CombinerKind::linear_add) {
    index_.tgt_wc = add("tgt.combiner.wc", combiner::init_linear_add_weights(d, wc_seed + 1, config_.linear_add_noise,
                                                                             config_.target_combiner.input));
  }

  auto attention = [&](const std::string& prefix) {
    AttentionParams a;
    for (auto [slot, suffix] : {std::pair{&a.wq, ".wq"}, {&a.wk, ".wk"}, {&a.wv, ".wv"}, {&a.wo, ".wo"}}) {
      auto r = rng();
      *slot = add(prefix + suffix, glorot(d, d, r));
    }
    return a;
  };
  auto feed_forward = [&](const std::string& prefix) {
    FeedForwardParams f;
    auto r1 = rng();
    f.w1 = add(prefix + ".w1", glorot(d, ff, r1));
    f.b1 = add(prefix + ".b1", Matrix(1, ff));
    auto r2 = rng();
    f.w2 = add(prefix + ".w2", glorot(ff, d, r2));
    f.b2 = add(prefix + ".b2", Matrix(1, d));
    return f;
  };
  auto norm = [&](const std::string& prefix) {
    NormParams n;
    n.gamma = add(prefix + ".gamma", Matrix(1, d, 1.0));
    n.beta = add(prefix + ".beta", Matrix(1, d));
    return n;
  };

  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    EncoderLayerParams e;
    e.self = attention(p + ".self");
    e.ln1 = norm(p + ".ln1");
    e.ffn = feed_forward(p + ".ffn");
    e.ln2 = norm(p + ".ln2");
    index_.encoder.push_back(e);
  }
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    DecoderLayerParams e;
    e.self = attention(p + ".self");
    e.ln1 = norm(p + ".ln1");
    e.cross = attention(p + ".cross");
    e.ln2 = norm(p + ".ln2");
    e.ffn = feed_forward(p + ".ffn");
    e.ln3 = norm(p + ".ln3");
    index_.decoder.push_back(e);
  }
  {
    auto r = rng();
    index_.out_w = add("out.w", glorot(d, config_.target_vocab, r));
  }
  index_.out_b = add("out.b", Matrix(1, config_.target_vocab));
}

std::size_t TransformerModel::add(std::string name, Matrix value) {
  if (lookup_.contains(name)) throw std::logic_error("duplicate parameter " + name);
  const std::size_t i = values_.size();
  lookup_.emplace(name, i);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return i;
}

std::optional<std::size_t> TransformerModel::find(const std::string& name) const {
  const auto it = lookup_.find(name);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

Matrix& TransformerModel::param(const std::string& name) {
  const auto i = find(name);
  if (!i) throw std::out_of_range("unknown parameter " + name);
  return values_[*i];
}

const Matrix& TransformerModel::param(const std::string& name) const {
  const auto i = find(name);
  if (!i) throw std::out_of_range("unknown parameter " + name);
  return values_[*i];
}

std::size_t TransformerModel::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& m : values_) n += m.size();
  return n;
}

std::vector<Matrix*> TransformerModel::parameters() {
  std::vector<Matrix*> out;
  for (auto& m : values_) out.push_back(&m);
  return out;
}

std::vector<const Matrix*> TransformerModel::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto& m : values_) out.push_back(&m);
  return out;
}

std::vector<HeadProjection> TransformerModel::heads(const AttentionParams& a) const {
  const std::size_t dk = config_.d_k();
  std::vector<HeadProjection> out;
  for (std::size_t h = 0; h < config_.num_heads; ++h) {
    out.push_back({num::slice_cols(values_[a.wq], h * dk, dk), num::slice_cols(values_[a.wk], h * dk, dk),
                   num::slice_cols(values_[a.wv], h * dk, dk)});
  }
  return out;
}

TokenBlock TokenBlock::single(std::span<const TokenId> ids) {
  TokenBlock b;
  b.batch = 1;
  b.len = ids.size();
  b.ids.assign(ids.begin(), ids.end());
  b.lengths = {ids.size()};
  return b;
}

void TokenBlock::validate(std::size_t vocab, std::size_t max_len, const char* what) const {
  const std::string w(what);
  if (batch == 0 || len == 0) throw std::invalid_argument(w + ": empty token block");
  if (ids.size() != batch * len || lengths.size() != batch) throw std::invalid_argument(w + ": inconsistent token block");
  if (len > max_len)
    throw std::invalid_argument(w + ": sequence length " + std::to_string(len) + " exceeds max_len " +
                                std::to_string(max_len));
  for (std::size_t l : lengths)
    if (l == 0 || l > len) throw std::invalid_argument(w + ": row length outside 1.." + std::to_string(len));
  for (TokenId id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw std::out_of_range(w + ": unknown token id " + std::to_string(id));
}

ForwardPass::ForwardPass(const TransformerModel& model, num::Tape& tape, ForwardOptions options)
    : model_(model), tape_(tape), options_(std::move(options)) {
  params_.reserve(model.num_parameters());
  for (std::size_t i = 0; i < model.num_parameters(); ++i) params_.push_back(tape.parameter(model.value(i)));
  for (const auto& p : options_.probes) p.validate(model.config().num_layers);
}

ForwardPass::ForwardPass(const TransformerModel& model, num::Tape& tape, std::vector<Var> params,
                         ForwardOptions options)
    : model_(model), tape_(tape), params_(std::move(params)), options_(std::move(options)) {
  if (params_.size() != model.num_parameters()) throw std::invalid_argument("ForwardPass: parameter count mismatch");
  for (const auto& p : options_.probes) p.validate(model.config().num_layers);
}

std::uint64_t ForwardPass::next_seed() {
  std::uint64_t st = options_.seed ^ (0x9E3779B97F4A7C15ULL * ++counter_);
  return num::splitmix64(st);
}

void ForwardPass::capture(ProbeKind kind, std::size_t layer, Var v) {
  const ProbePoint p{kind, layer};
  if (std::find(options_.probes.begin(), options_.probes.end(), p) != options_.probes.end()) captures_[p] = v.value();
}

Var ForwardPass::drop(Var x, double rate) { return num::dropout(x, rate, options_.training, next_seed()); }

Var ForwardPass::embed(const TokenBlock& tokens, std::size_t table, const std::optional<std::size_t>& wc,
                       const combiner::CombinerConfig& comb, ProbeKind embedding_probe, ProbeKind combined_probe) {
  const auto& cfg = model_.config();
  const std::size_t d = cfg.d_model;
  const Var s = num::scale(num::gather_rows(params_[table], tokens.ids), std::sqrt(static_cast<double>(d)));
  capture(embedding_probe, 0, s);
  Matrix pos(tokens.batch * tokens.len, d);
  const Matrix& pe = model_.positions().table();
  for (std::size_t b = 0; b < tokens.batch; ++b)
    for (std::size_t t = 0; t < tokens.len; ++t) {
      auto src = pe.row(t);
      std::copy(src.begin(), src.end(), pos.row(b * tokens.len + t).begin());
    }
  const Var p = tape_.constant(std::move(pos));
  std::optional<Var> w;
  if (wc) w = params_[*wc];
  const double inner_rate = comb.dropout_rate.value_or(cfg.dropout);
  const Var combined = combiner::combine(s, p, comb, w, inner_rate, options_.training, next_seed());
  capture(combined_probe, 0, combined);
  if (comb.kind == combiner::CombinerKind::linear_add) return combined;
  return drop(combined, cfg.dropout);
}

Var ForwardPass::mha(Var q_in, Var kv_in, const AttentionParams& a, const AttentionLayout& layout) {
  const Var q = num::matmul(q_in, params_[a.wq]);
  const Var k = num::matmul(kv_in, params_[a.wk]);
  const Var v = num::matmul(kv_in, params_[a.wv]);
  return num::matmul(attention(q, k, v, model_.config().num_heads, layout), params_[a.wo]);
}

Var ForwardPass::ffn(Var x, const FeedForwardParams& f) {
  const Var h = num::relu(num::add_bias(num::matmul(x, params_[f.w1]), params_[f.b1]));
  return num::add_bias(num::matmul(h, params_[f.w2]), params_[f.b2]);
}

Var ForwardPass::norm(Var x, const NormParams& n) {
  return num::layer_norm(x, params_[n.gamma], params_[n.beta], model_.config().layer_norm_eps);
}

Var ForwardPass::encode(const TokenBlock& source) {
  const auto& cfg = model_.config();
  source.validate(cfg.source_vocab, cfg.max_len, "encoder");
  const auto& ix = model_.index();
  Var x = embed(source, ix.src_embed, ix.src_wc, cfg.source_combiner, ProbeKind::src_embedding,
                ProbeKind::src_combined);
  const AttentionLayout self{source.batch, source.len, source.len, source.lengths, false};
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto& e = ix.encoder[l];
    x = norm(num::add(x, drop(mha(x, x, e.self, self), cfg.dropout)), e.ln1);
    x = norm(num::add(x, drop(ffn(x, e.ffn), cfg.dropout)), e.ln2);
    capture(ProbeKind::encoder_layer_out, l + 1, x);
  }
  return x;
}

Var ForwardPass::decode(const TokenBlock& target_in, Var memory, const std::vector<std::size_t>& source_lengths,
                        std::size_t source_len) {
  const auto& cfg = model_.config();
  target_in.validate(cfg.target_vocab, cfg.max_len, "decoder");
  const auto& ix = model_.index();
  Var y = embed(target_in, ix.tgt_embed, ix.tgt_wc, cfg.target_combiner, ProbeKind::tgt_embedding,
                ProbeKind::tgt_combined);
  const AttentionLayout self{target_in.batch, target_in.len, target_in.len, target_in.lengths, true};
  const AttentionLayout cross{target_in.batch, target_in.len, source_len, source_lengths, false};
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto& e = ix.decoder[l];
    y = norm(num::add(y, drop(mha(y, y, e.self, self), cfg.dropout)), e.ln1);
    capture(ProbeKind::decoder_layer_self, l + 1, y);
    y = norm(num::add(y, drop(mha(y, memory, e.cross, cross), cfg.dropout)), e.ln2);
    capture(ProbeKind::decoder_layer_cross, l + 1, y);
    y = norm(num::add(y, drop(ffn(y, e.ffn), cfg.dropout)), e.ln3);
    capture(ProbeKind::decoder_layer_out, l + 1, y);
  }
  const Var logits = num::add_bias(num::matmul(y, params_[ix.out_w]), params_[ix.out_b]);
  capture(ProbeKind::final_logits, 0, logits);
  return logits;
}

EncoderResult encoder_forward(const TransformerModel& model, const TokenBlock& source, bool training,
                              std::uint64_t seed, const std::vector<ProbePoint>& probes) {
  num::Tape tape(false);
  ForwardPass fp(model, tape, {training, seed, probes});
  const Var out = fp.encode(source);
  return {out.value(), fp.take_captures()};
}

DecoderResult decoder_forward(const TransformerModel& model, const TokenBlock& target_in, const Matrix& encoder_out,
                              const std::vector<std::size_t>& source_lengths, std::size_t source_len, bool training,
                              std::uint64_t seed, const std::vector<ProbePoint>& probes) {
  num::Tape tape(false);
  ForwardPass fp(model, tape, {training, seed, probes});
  const Var mem = tape.constant(encoder_out);
  const Var out = fp.decode(target_in, mem, source_lengths, source_len);
  return {out.value(), fp.take_captures()};
}

}  // namespace helix::model
