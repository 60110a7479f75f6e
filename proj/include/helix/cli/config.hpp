#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "helix/combiner/combiner.hpp"
#include "helix/corpus/grammar.hpp"
#include "helix/model/config.hpp"

namespace helix::cli {

/// Bad configuration, flags or missing inputs; maps to exit status 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CorpusParams {
  /// Tab-separated source/target file; the synthetic grammar is used when empty.
  std::filesystem::path tsv;
  std::size_t train_pairs = 5000;
  std::size_t validation_pairs = 500;
  std::size_t probe_sentences = 1000;
  corpus::GrammarOptions grammar;
};

struct TrainingParams {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::size_t warmup_steps = 4000;
  std::optional<double> fixed_lr;
};

struct TsneParams {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::size_t max_points = 1000;
  double learning_rate = 200.0;
};

struct AnalysisParams {
  std::size_t pca_k = 3;
  std::size_t cluster_dims = 5;
  std::size_t min_count = 50;
  std::size_t n_init = 10;
  std::size_t elbow_k_max = 8;
  std::size_t raw_pe_rows = 80;
  /// Probe used for decoder-side PoS clustering and t-SNE.
  model::ProbePoint mid_attention = model::decoder_cross(2);
  /// Probe used for the di-gram comparison; the last decoder layer when unset.
  std::optional<model::ProbePoint> post_attention;
  /// Positions covered by the collision grid.
  std::size_t collision_positions = 20;
  std::size_t threads = 1;
  TsneParams tsne;
};

struct CompareParams {
  std::vector<combiner::CombinerConfig> strategies{
      {}, {.kind = combiner::CombinerKind::weighted_sum, .weight = 0.3}, {.kind = combiner::CombinerKind::linear_add}};
  std::size_t seeds = 3;
  std::vector<double> sweep{0.1, 0.3, 0.5, 0.7, 1.0};
  /// Model scale for the comparison runs: "paper", "desk" or "run" (the run's model).
  std::string scale = "desk";
  std::size_t threads = 1;
};

struct RunConfig {
  std::string experiment = "default";
  std::uint64_t seed = 0;
  /// "paper", "desk" or "custom": the preset the model fields started from.
  std::string scale = "paper";
  model::TransformerConfig model = model::TransformerConfig::paper();
  combiner::CombinerConfig combiner;
  CorpusParams corpus;
  TrainingParams training;
  /// Captured by `probe`; every probe point when empty.
  std::vector<model::ProbePoint> probes;
  AnalysisParams analysis;
  CompareParams compare;
  std::filesystem::path output_dir = "runs";

  /// Decoder probe for the di-gram comparison.
  model::ProbePoint post_attention() const;
  /// Last encoder layer output.
  model::ProbePoint encoder_output() const;
  /// The configured probes, or all of them.
  std::vector<model::ProbePoint> probe_list() const;
  /// Throws ValidationError naming the first violated constraint.
  void validate() const;
};

/// Canonical JSON form (sorted keys) of a resolved configuration.
std::string to_json_string(const RunConfig& config);

/// Parses a JSON document. Missing fields take their defaults, model fields
/// from the "scale" preset; unknown keys and a missing seed are rejected.
RunConfig parse_run_config(const std::string& json_text);

/// Reads the file, applies "dotted.key=value" overrides, resolves
/// output_dir against HELIX_OUT and validates. Override values are parsed as
/// JSON, falling back to a plain string.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// 16 hex digits of FNV-1a over the canonical JSON.
std::string config_hash(const RunConfig& config);

/// 16 hex digits of FNV-1a over the bytes.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace helix::cli
