#include "helix/model/config.hpp"

#include <charconv>
#include <stdexcept>

namespace helix::model {

void TransformerConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (num_layers == 0) fail("num_layers must be at least 1");
  if (d_model == 0 || d_model % 2 != 0) fail("d_model must be positive and even");
  if (num_heads == 0 || d_model % num_heads != 0) fail("d_model must be divisible by num_heads");
  if (d_ff == 0) fail("d_ff must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (source_vocab <= 4 || target_vocab <= 4) fail("vocabularies must contain more than the 4 special tokens");
  if (max_len < 2) fail("max_len must be at least 2");
  if (!(pe_base > 1.0)) fail("pe_base must exceed 1");
  if (!(embed_init > 0.0)) fail("embed_init must be positive");
  if (!(linear_add_noise >= 0.0)) fail("linear_add_noise must be non-negative");
  if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
  for (const auto* c : {&source_combiner, &target_combiner}) {
    if (c->kind == combiner::CombinerKind::weighted_sum && !(c->weight > 0.0)) fail("combiner weight must be positive");
    if (c->dropout_rate && !(*c->dropout_rate >= 0.0 && *c->dropout_rate < 1.0)) fail("combiner dropout must lie in [0, 1)");
  }
}

TransformerConfig TransformerConfig::paper() { return {}; }

TransformerConfig TransformerConfig::desk() {
  TransformerConfig c;
  c.num_layers = 2;
  c.d_model = 64;
  c.num_heads = 4;
  c.d_ff = 128;
  return c;
}

namespace {

struct KindName {
  ProbeKind kind;
  std::string_view prefix;
  std::string_view suffix;
};

constexpr KindName kNames[] = {
    {ProbeKind::src_embedding, "src_embedding", ""},
    {ProbeKind::src_combined, "src_combined", ""},
    {ProbeKind::encoder_layer_out, "encoder_layer_", "_out"},
    {ProbeKind::tgt_embedding, "tgt_embedding", ""},
    {ProbeKind::tgt_combined, "tgt_combined", ""},
    {ProbeKind::decoder_layer_self, "decoder_layer_", "_self"},
    {ProbeKind::decoder_layer_cross, "decoder_layer_", "_cross"},
    {ProbeKind::decoder_layer_out, "decoder_layer_", "_out"},
    {ProbeKind::final_logits, "final_logits", ""},
};

const KindName& entry(ProbeKind k) {
  for (const auto& e : kNames)
    if (e.kind == k) return e;
  throw std::invalid_argument("unknown probe kind");
}

}  // namespace

bool ProbePoint::source_side() const noexcept {
  return kind == ProbeKind::src_embedding || kind == ProbeKind::src_combined || kind == ProbeKind::encoder_layer_out;
}

bool ProbePoint::per_layer() const noexcept { return !entry(kind).suffix.empty(); }

std::string ProbePoint::name() const {
  const auto& e = entry(kind);
  if (e.suffix.empty()) return std::string(e.prefix);
  return std::string(e.prefix) + std::to_string(layer) + std::string(e.suffix);
}

ProbePoint ProbePoint::parse(std::string_view text) {
  for (const auto& e : kNames) {
    if (e.suffix.empty()) {
      if (text == e.prefix) return {e.kind, 0};
      continue;
    }
    if (text.size() <= e.prefix.size() + e.suffix.size() || !text.starts_with(e.prefix) || !text.ends_with(e.suffix))
      continue;
    const auto digits = text.substr(e.prefix.size(), text.size() - e.prefix.size() - e.suffix.size());
    std::size_t layer = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), layer);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && layer >= 1) return {e.kind, layer};
  }
  throw std::invalid_argument("unknown probe point '" + std::string(text) + "'");
}

void ProbePoint::validate(std::size_t num_layers) const {
  if (per_layer() && (layer < 1 || layer > num_layers))
    throw std::invalid_argument("probe " + name() + ": layer outside 1.." + std::to_string(num_layers));
  if (!per_layer() && layer != 0) throw std::invalid_argument("probe " + name() + " takes no layer");
}

ProbePoint encoder_out(std::size_t layer) { return {ProbeKind::encoder_layer_out, layer}; }
ProbePoint decoder_self(std::size_t layer) { return {ProbeKind::decoder_layer_self, layer}; }
ProbePoint decoder_cross(std::size_t layer) { return {ProbeKind::decoder_layer_cross, layer}; }
ProbePoint decoder_out(std::size_t layer) { return {ProbeKind::decoder_layer_out, layer}; }

std::vector<ProbePoint> all_probes(std::size_t num_layers) {
  std::vector<ProbePoint> out{{ProbeKind::src_embedding, 0}, {ProbeKind::src_combined, 0}};
  for (std::size_t l = 1; l <= num_layers; ++l) out.push_back(encoder_out(l));
  out.push_back({ProbeKind::tgt_embedding, 0});
  out.push_back({ProbeKind::tgt_combined, 0});
  for (std::size_t l = 1; l <= num_layers; ++l) {
    out.push_back(decoder_self(l));
    out.push_back(decoder_cross(l));
    out.push_back(decoder_out(l));
  }
  out.push_back({ProbeKind::final_logits, 0});
  return out;
}

}  // namespace helix::model
