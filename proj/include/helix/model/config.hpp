#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "helix/combiner/combiner.hpp"

namespace helix::model {

struct TransformerConfig {
  std::size_t num_layers = 4;
  std::size_t d_model = 128;
  std::size_t num_heads = 8;
  std::size_t d_ff = 512;
  double dropout = 0.1;
  std::size_t source_vocab = 0;
  std::size_t target_vocab = 0;
  /// Rows of the positional table; longer sequences are rejected.
  std::size_t max_len = 64;
  combiner::CombinerConfig source_combiner;
  combiner::CombinerConfig target_combiner;
  double pe_base = 10000.0;
  /// Embedding tables start as U(-embed_init, embed_init).
  double embed_init = 0.05;
  /// Noise half-width around [I; 0] for LinearAdd weights.
  double linear_add_noise = 0.01;
  double layer_norm_eps = 1e-6;

  std::size_t d_k() const noexcept { return num_heads ? d_model / num_heads : 0; }
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  /// 128 / 4 layers / 8 heads / 512.
  static TransformerConfig paper();
  /// 64 / 2 layers / 4 heads / 128.
  static TransformerConfig desk();

  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

enum class ProbeKind {
  src_embedding,
  src_combined,
  encoder_layer_out,
  tgt_embedding,
  tgt_combined,
  decoder_layer_self,
  decoder_layer_cross,
  decoder_layer_out,
  final_logits,
};

/// Activation capture location. `layer` is 1-based for the per-layer kinds
/// and 0 otherwise.
struct ProbePoint {
  ProbeKind kind = ProbeKind::src_embedding;
  std::size_t layer = 0;

  bool source_side() const noexcept;
  bool per_layer() const noexcept;
  /// e.g. "src_combined", "encoder_layer_2_out", "decoder_layer_1_cross".
  std::string name() const;
  /// Inverse of name(); throws std::invalid_argument.
  static ProbePoint parse(std::string_view text);
  /// Throws std::invalid_argument when the layer is outside 1..num_layers.
  void validate(std::size_t num_layers) const;

  friend auto operator<=>(const ProbePoint&, const ProbePoint&) = default;
};

ProbePoint encoder_out(std::size_t layer);
ProbePoint decoder_self(std::size_t layer);
ProbePoint decoder_cross(std::size_t layer);
ProbePoint decoder_out(std::size_t layer);

/// Every probe point for the given depth, source side first.
std::vector<ProbePoint> all_probes(std::size_t num_layers);

}  // namespace helix::model
