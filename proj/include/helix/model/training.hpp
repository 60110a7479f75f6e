#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "helix/corpus/batching.hpp"
#include "helix/model/transformer.hpp"
#include "helix/numerics/adam.hpp"

namespace helix::model {

struct StepResult {
  double loss = 0.0;
  std::size_t tokens = 0;
  std::size_t correct = 0;
};

struct EpochMetrics {
  /// Token-weighted mean cross-entropy over non-pad target positions.
  double loss = 0.0;
  /// Teacher-forced argmax accuracy over the same positions.
  double accuracy = 0.0;
  std::size_t tokens = 0;
};

/// Adam over model.parameters() in index order, with d_model taken from the model.
numerics::AdamState make_optimizer(const TransformerModel& model, numerics::AdamOptions options = {});

/// Source and target-in blocks of a batch.
TokenBlock source_block(const corpus::Batch& batch);
TokenBlock target_block(const corpus::Batch& batch);

/// Masked cross-entropy loss on a recording tape, plus token counts.
struct LossOutput {
  Var loss;
  Var logits;
  std::size_t tokens = 0;
};
LossOutput batch_loss(ForwardPass& pass, const corpus::Batch& batch);

/// One optimisation step. Batches without target tokens leave the model and
/// optimiser untouched. A non-finite loss throws std::runtime_error naming `batch_id`.
StepResult train_step(TransformerModel& model, numerics::AdamState& adam, const corpus::Batch& batch,
                      std::uint64_t seed, std::size_t batch_id = 0);

/// Step seeds are Rng::derive(seed, i) for batch i.
EpochMetrics train_epoch(TransformerModel& model, numerics::AdamState& adam, const std::vector<corpus::Batch>& batches,
                         std::uint64_t seed,
                         const std::function<void(std::size_t, const StepResult&)>& on_step = {});

/// Dropout off, no parameter changes.
EpochMetrics evaluate(const TransformerModel& model, const std::vector<corpus::Batch>& batches);

/// Accuracy of always predicting the most frequent target-out token of
/// `train` on the target-out positions of `eval`.
double unigram_baseline_accuracy(const std::vector<corpus::TokenizedPair>& train,
                                 const std::vector<corpus::TokenizedPair>& eval);

}  // namespace helix::model
