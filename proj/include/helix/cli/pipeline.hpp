#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "helix/analysis/clustering.hpp"
#include "helix/analysis/collision.hpp"
#include "helix/analysis/helix_fit.hpp"
#include "helix/analysis/pca.hpp"
#include "helix/analysis/profile.hpp"
#include "helix/analysis/tsne.hpp"
#include "helix/cli/config.hpp"
#include "helix/corpus/corpus.hpp"
#include "helix/model/probe.hpp"
#include "helix/model/training.hpp"

namespace helix::cli {

using numerics::Matrix;

struct CorpusSplits {
  /// Vocabularies and every generated or loaded pair.
  corpus::Corpus corpus;
  std::vector<corpus::TokenizedPair> train;
  std::vector<corpus::TokenizedPair> validation;
  /// Held-out sentences fed to the probes.
  std::vector<corpus::TokenizedPair> probe;
};

/// Synthetic: train, validation and probe pairs drawn in that order from one
/// stream seeded by the grammar and run seeds. TSV: validation is the tail,
/// train the rest (capped at train_pairs), probe the leading probe_sentences pairs.
CorpusSplits prepare_corpus(const RunConfig& config);

/// Model configuration with vocabulary sizes and the configured combiner on both sides.
model::TransformerConfig resolved_model(const RunConfig& config, const corpus::Corpus& corpus);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainingRun {
  model::TransformerModel model;
  /// Validation metrics before the first step.
  model::EpochMetrics initial;
  std::vector<EpochRecord> history;
  double baseline_accuracy = 0.0;

  double final_val_loss() const { return history.empty() ? initial.loss : history.back().val_loss; }
  double final_val_accuracy() const { return history.empty() ? initial.accuracy : history.back().val_accuracy; }
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains a fresh model for config.training.epochs. `training_seed` drives
/// initialisation, shuffling and dropout; the corpus is fixed by `splits`.
TrainingRun train_run(const model::TransformerConfig& model_config, const TrainingParams& params,
                      const CorpusSplits& splits, std::uint64_t training_seed, const EpochCallback& on_epoch = {});

/// Explained variance and the position-ordered path of a positional profile.
struct ProfileAnalysis {
  analysis::PositionalProfile profile;
  analysis::PcaModel pca;
  /// length × k coordinates.
  Matrix coords;
  /// Present when the profile has at least 8 positions.
  std::optional<analysis::HelixFit> helix;

  double top3_share() const { return pca.share(3); }
};

/// Requires at least 3 positions; k is capped by the profile length.
ProfileAnalysis analyze_profile(analysis::PositionalProfile profile, std::size_t k);

struct RawPeAnalysis {
  std::size_t rows = 0;
  analysis::PcaModel pca;
  /// rows × 3.
  Matrix coords;
  bool self_intersects = false;
  /// Endpoint gap of the 2-D projection over its largest extent.
  double endpoint_gap = 0.0;

  double top3_share() const { return pca.share(3); }
  /// Non-self-intersecting with an endpoint gap above a tenth of the extent.
  bool open_arch() const { return !self_intersects && endpoint_gap > 0.1; }
};

/// PCA of the first `rows` rows of the sinusoidal table.
RawPeAnalysis analyze_raw_pe(std::size_t d_model, std::size_t rows, double base = 10000.0);

/// Integer class labels for cluster scoring.
int tag_label(corpus::PosTag tag);
/// Verbs and adjuvants share one label; stage-1 ground truth.
int verboid_label(corpus::PosTag tag);

struct PosClustering {
  model::ProbePoint probe;
  analysis::DeltaVectors deltas;
  analysis::PcaModel pca;
  /// Single-deltas reduced to cluster_dims.
  Matrix reduced;
  analysis::ElbowResult elbow;
  analysis::TwoStageResult two_stage;
  /// Against {noun, adjective, verb+adjuvant}.
  double stage1_ari = 0.0;
  double stage1_purity = 0.0;
  double stage1_silhouette = 0.0;
  /// Purity of the stage-2 split over its verb and adjuvant members.
  double stage2_purity = 0.0;
  std::size_t stage2_scored = 0;
  /// Largest per-coordinate spread (max - min) of the reduced vectors.
  double coordinate_range = 0.0;
};

/// Single-deltas of the filtered records, PCA to cluster_dims, elbow curve,
/// then two-stage K-Means++ with the verboid cluster picked by adjuvant share.
PosClustering pos_clustering(const model::ProbeRecords& records, const analysis::PositionalProfile& profile,
                             const analysis::TokenFilter& filter, const AnalysisParams& params, std::uint64_t seed);

struct DigramComparison {
  model::ProbePoint probe;
  /// One cluster per distinct next-token tag.
  std::size_t k = 0;
  std::size_t digrams = 0;
  analysis::ClusterModel single;
  analysis::ClusterModel digram;
  /// Next-token tag purity of clustering the current token alone.
  double single_purity = 0.0;
  /// Next-token tag purity of clustering the concatenated pair.
  double digram_purity = 0.0;
};

DigramComparison digram_comparison(const model::ProbeRecords& records, const analysis::PositionalProfile& profile,
                                   const analysis::TokenFilter& filter, const AnalysisParams& params,
                                   std::uint64_t seed);

struct TsneAnalysis {
  model::ProbePoint probe;
  analysis::DeltaVectors deltas;
  analysis::TsneResult result;
};

/// t-SNE of the full-width single-deltas of the first max_points filtered records.
TsneAnalysis tsne_analysis(const model::ProbeRecords& records, const analysis::PositionalProfile& profile,
                           const analysis::TokenFilter& filter, const TsneParams& params, std::uint64_t seed);

/// Collision audit of the source combiner over the filtered source vocabulary
/// and the first `positions` positions.
analysis::CollisionReport source_collisions(const model::TransformerModel& model, const corpus::Vocab& vocab,
                                            std::size_t positions);

/// Token filter of a vocabulary as a callable.
analysis::TokenFilter make_filter(const corpus::Vocab& vocab);

struct StrategyRun {
  combiner::CombinerConfig strategy;
  std::uint64_t seed = 0;
  model::EpochMetrics initial;
  std::vector<EpochRecord> history;
  double final_val_loss() const { return history.empty() ? initial.loss : history.back().val_loss; }
};

struct StrategySummary {
  combiner::CombinerConfig strategy;
  double mean_final_loss = 0.0;
  /// Sample standard deviation across seeds.
  double stddev_final_loss = 0.0;
};

struct CombinerComparison {
  /// Strategy-major, seeds in order; sweep-only strategies follow.
  std::vector<StrategyRun> runs;
  std::vector<StrategySummary> strategies;
  std::vector<StrategySummary> sweep;
  /// Sweep weight with the lowest mean final validation loss.
  std::optional<double> sweep_optimum;

  const StrategySummary* find(const combiner::CombinerConfig& c) const;
};

/// Model configuration used by compare-combiners (before the strategy is applied).
model::TransformerConfig comparison_model(const RunConfig& config, const corpus::Corpus& corpus);

/// Trains every strategy (and every sweep weight) for seeds config.seed + i,
/// i < compare.seeds, on the same corpus. Runs may execute on
/// compare.threads workers; results are ordered as if sequential.
CombinerComparison compare_combiners(const RunConfig& config, const CorpusSplits& splits, bool include_sweep,
                                     const std::function<void(const StrategyRun&)>& on_run = {});

}  // namespace helix::cli
