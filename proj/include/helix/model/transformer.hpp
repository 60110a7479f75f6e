#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "helix/corpus/vocab.hpp"
#include "helix/model/attention.hpp"
#include "helix/model/config.hpp"
#include "helix/numerics/tape.hpp"
#include "helix/posenc/positional_table.hpp"

namespace helix::model {

using corpus::TokenId;

struct AttentionParams {
  std::size_t wq = 0, wk = 0, wv = 0, wo = 0;
};
struct FeedForwardParams {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
};
struct NormParams {
  std::size_t gamma = 0, beta = 0;
};
struct EncoderLayerParams {
  AttentionParams self;
  FeedForwardParams ffn;
  NormParams ln1, ln2;
};
struct DecoderLayerParams {
  AttentionParams self, cross;
  FeedForwardParams ffn;
  NormParams ln1, ln2, ln3;
};
/// Indices into TransformerModel's parameter list.
struct ParamIndex {
  std::size_t src_embed = 0, tgt_embed = 0;
  std::optional<std::size_t> src_wc, tgt_wc;
  std::vector<EncoderLayerParams> encoder;
  std::vector<DecoderLayerParams> decoder;
  std::size_t out_w = 0, out_b = 0;
};

/// Named parameters of the encoder–decoder. Attention projections are packed
/// d_model×d_model matrices whose column block h (width d_k) is head h's
/// W_h^Q, W_h^K or W_h^V. Names look like "enc.0.self.wq", "dec.1.ffn.b2".
class TransformerModel {
 public:
  TransformerModel(TransformerConfig config, std::uint64_t seed);

  const TransformerConfig& config() const noexcept { return config_; }
  const ParamIndex& index() const noexcept { return index_; }
  const posenc::PositionalTable& positions() const noexcept { return positions_; }

  std::size_t num_parameters() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  Matrix& value(std::size_t i) { return values_.at(i); }
  const Matrix& value(std::size_t i) const { return values_.at(i); }
  /// Throws std::out_of_range for unknown names.
  Matrix& param(const std::string& name);
  const Matrix& param(const std::string& name) const;
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t scalar_count() const noexcept;

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

  /// Per-head slices of a packed projection, for the reference multi_head.
  std::vector<HeadProjection> heads(const AttentionParams& a) const;

 private:
  std::size_t add(std::string name, Matrix value);

  TransformerConfig config_;
  posenc::PositionalTable positions_;
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::map<std::string, std::size_t> lookup_;
  ParamIndex index_;
};

/// batch × len ids, row-major, padded with kPad beyond each row's length.
struct TokenBlock {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<TokenId> ids;
  std::vector<std::size_t> lengths;

  static TokenBlock single(std::span<const TokenId> ids);
  TokenId at(std::size_t b, std::size_t t) const { return ids[b * len + t]; }
  void validate(std::size_t vocab, std::size_t max_len, const char* what) const;
};

using Captures = std::map<ProbePoint, Matrix>;

struct ForwardOptions {
  bool training = false;
  std::uint64_t seed = 0;
  std::vector<ProbePoint> probes;
};

/// One forward computation on a tape. Parameters are bound either as borrowed
/// leaves (gradients flow to them) or supplied by the caller.
class ForwardPass {
 public:
  ForwardPass(const TransformerModel& model, numerics::Tape& tape, ForwardOptions options);
  ForwardPass(const TransformerModel& model, numerics::Tape& tape, std::vector<Var> params, ForwardOptions options);

  /// (batch·len)×d_model encoder output.
  Var encode(const TokenBlock& source);
  /// (batch·len)×target_vocab logits.
  Var decode(const TokenBlock& target_in, Var memory, const std::vector<std::size_t>& source_lengths,
             std::size_t source_len);

  Var param(std::size_t i) const { return params_.at(i); }
  const std::vector<Var>& params() const noexcept { return params_; }
  const Captures& captures() const noexcept { return captures_; }
  Captures take_captures() { return std::move(captures_); }

 private:
  Var embed(const TokenBlock& tokens, std::size_t table, const std::optional<std::size_t>& wc,
            const combiner::CombinerConfig& comb, ProbeKind embedding_probe, ProbeKind combined_probe);
  Var mha(Var q_in, Var kv_in, const AttentionParams& a, const AttentionLayout& layout);
  Var ffn(Var x, const FeedForwardParams& f);
  Var norm(Var x, const NormParams& n);
  Var drop(Var x, double rate);
  void capture(ProbeKind kind, std::size_t layer, Var v);
  std::uint64_t next_seed();

  const TransformerModel& model_;
  numerics::Tape& tape_;
  std::vector<Var> params_;
  ForwardOptions options_;
  std::uint64_t counter_ = 0;
  Captures captures_;
};

struct EncoderResult {
  Matrix output;
  Captures captures;
};
struct DecoderResult {
  Matrix logits;
  Captures captures;
};

/// Values only. Throws std::out_of_range for ids outside the vocabulary and
/// std::invalid_argument for sequences longer than max_len.
EncoderResult encoder_forward(const TransformerModel& model, const TokenBlock& source, bool training,
                              std::uint64_t seed, const std::vector<ProbePoint>& probes = {});
DecoderResult decoder_forward(const TransformerModel& model, const TokenBlock& target_in, const Matrix& encoder_out,
                              const std::vector<std::size_t>& source_lengths, std::size_t source_len, bool training,
                              std::uint64_t seed, const std::vector<ProbePoint>& probes = {});

}  // namespace helix::model
