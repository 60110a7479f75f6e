#include "helix/model/training.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "helix/numerics/rng.hpp"

namespace helix::model {

namespace num = helix::numerics;

num::AdamState make_optimizer(const TransformerModel& model, num::AdamOptions options) {
  options.d_model = model.config().d_model;
  const auto params = model.parameters();
  return num::AdamState(options, params);
}

TokenBlock source_block(const corpus::Batch& batch) {
  return {batch.size, batch.source_len, batch.source, batch.source_lengths};
}

TokenBlock target_block(const corpus::Batch& batch) {
  return {batch.size, batch.target_len, batch.target_in, batch.target_lengths};
}

namespace {

std::vector<double> target_weights(const corpus::Batch& batch, std::size_t* tokens) {
  std::vector<double> w(batch.target_out.size(), 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (batch.target_out[i] != corpus::kPad) {
      w[i] = 1.0;
      ++n;
    }
  }
  if (tokens) *tokens = n;
  return w;
}

std::size_t count_correct(const Matrix& logits, const corpus::Batch& batch) {
  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (batch.target_out[r] == corpus::kPad) continue;
    const auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    correct += static_cast<corpus::TokenId>(best) == batch.target_out[r];
  }
  return correct;
}

}  // namespace

LossOutput batch_loss(ForwardPass& pass, const corpus::Batch& batch) {
  const Var memory = pass.encode(source_block(batch));
  const Var logits = pass.decode(target_block(batch), memory, batch.source_lengths, batch.source_len);
  std::size_t tokens = 0;
  const auto weights = target_weights(batch, &tokens);
  const Var loss = num::cross_entropy(logits, batch.target_out, weights);
  return {loss, logits, tokens};
}

StepResult train_step(TransformerModel& model, num::AdamState& adam, const corpus::Batch& batch, std::uint64_t seed,
                      std::size_t batch_id) {
  num::Tape tape(true);
  ForwardPass pass(model, tape, {true, seed, {}});
  const LossOutput out = batch_loss(pass, batch);
  StepResult r;
  r.tokens = out.tokens;
  r.loss = out.loss.value()(0, 0);
  if (out.tokens == 0) return r;
  if (!std::isfinite(r.loss)) throw std::runtime_error("non-finite loss in batch " + std::to_string(batch_id));
  r.correct = count_correct(out.logits.value(), batch);
  tape.backward(out.loss);
  std::vector<const Matrix*> grads;
  std::vector<Matrix> zeros;
  zeros.reserve(model.num_parameters());
  for (std::size_t i = 0; i < model.num_parameters(); ++i) {
    const Matrix& g = tape.gradient(pass.param(i));
    if (g.empty()) {
      zeros.emplace_back(model.value(i).rows(), model.value(i).cols());
      grads.push_back(&zeros.back());
    } else {
      grads.push_back(&g);
    }
  }
  const auto params = model.parameters();
  adam.apply(params, grads);
  return r;
}

EpochMetrics train_epoch(TransformerModel& model, num::AdamState& adam, const std::vector<corpus::Batch>& batches,
                         std::uint64_t seed, const std::function<void(std::size_t, const StepResult&)>& on_step) {
  double loss_sum = 0.0;
  std::size_t tokens = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const StepResult r = train_step(model, adam, batches[i], num::Rng::derive(seed, i).next(), i);
    loss_sum += r.loss * static_cast<double>(r.tokens);
    tokens += r.tokens;
    correct += r.correct;
    if (on_step) on_step(i, r);
  }
  EpochMetrics m;
  m.tokens = tokens;
  if (tokens) {
    m.loss = loss_sum / static_cast<double>(tokens);
    m.accuracy = static_cast<double>(correct) / static_cast<double>(tokens);
  }
  return m;
}

EpochMetrics evaluate(const TransformerModel& model, const std::vector<corpus::Batch>& batches) {
  double loss_sum = 0.0;
  std::size_t tokens = 0;
  std::size_t correct = 0;
  for (const auto& b : batches) {
    num::Tape tape(false);
    ForwardPass pass(model, tape, {false, 0, {}});
    const LossOutput out = batch_loss(pass, b);
    if (out.tokens == 0) continue;
    loss_sum += out.loss.value()(0, 0) * static_cast<double>(out.tokens);
    tokens += out.tokens;
    correct += count_correct(out.logits.value(), b);
  }
  EpochMetrics m;
  m.tokens = tokens;
  if (tokens) {
    m.loss = loss_sum / static_cast<double>(tokens);
    m.accuracy = static_cast<double>(correct) / static_cast<double>(tokens);
  }
  return m;
}

double unigram_baseline_accuracy(const std::vector<corpus::TokenizedPair>& train,
                                 const std::vector<corpus::TokenizedPair>& eval) {
  std::map<corpus::TokenId, std::size_t> counts;
  for (const auto& p : train)
    for (std::size_t t = 1; t < p.target.size(); ++t) ++counts[p.target[t]];
  if (counts.empty()) throw std::invalid_argument("unigram_baseline_accuracy: empty training set");
  corpus::TokenId best = counts.begin()->first;
  for (const auto& [id, n] : counts)
    if (n > counts[best]) best = id;
  std::size_t hit = 0;
  std::size_t total = 0;
  for (const auto& p : eval) {
    for (std::size_t t = 1; t < p.target.size(); ++t) {
      hit += p.target[t] == best;
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

}  // namespace helix::model
