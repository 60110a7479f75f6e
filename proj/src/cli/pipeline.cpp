#include "helix/cli/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "helix/analysis/digram.hpp"
#include "helix/corpus/batching.hpp"
#include "helix/corpus/grammar.hpp"
#include "helix/numerics/ops.hpp"
#include "helix/numerics/rng.hpp"
#include "helix/posenc/positional_table.hpp"

namespace helix::cli {

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) { return numerics::Rng::derive(seed, stream).next(); }

enum Stream : std::uint64_t { init_stream = 11, shuffle_stream = 12, dropout_stream = 13 };

std::size_t longest(const std::vector<corpus::TokenizedPair>& pairs) {
  std::size_t n = 0;
  for (const auto& p : pairs) n = std::max({n, p.source.size(), p.target.size()});
  return n;
}

double purity_of(const std::vector<std::size_t>& assignments, const std::vector<int>& truth) {
  return analysis::cluster_eval(assignments, truth).purity;
}

}  // namespace

CorpusSplits prepare_corpus(const RunConfig& config) {
  const auto& p = config.corpus;
  CorpusSplits out;
  if (p.tsv.empty()) {
    const corpus::SyntheticGrammar grammar(p.grammar);
    out.corpus = corpus::generate_corpus(grammar, p.train_pairs + p.validation_pairs + p.probe_sentences, config.seed);
    const auto first = out.corpus.pairs.begin();
    out.train.assign(first, first + static_cast<std::ptrdiff_t>(p.train_pairs));
    out.validation.assign(first + static_cast<std::ptrdiff_t>(p.train_pairs),
                          first + static_cast<std::ptrdiff_t>(p.train_pairs + p.validation_pairs));
    out.probe.assign(first + static_cast<std::ptrdiff_t>(p.train_pairs + p.validation_pairs), out.corpus.pairs.end());
    return out;
  }
  const auto tsv = corpus::load_tsv(p.tsv);
  out.corpus = corpus::build_vocab_and_tokenize(tsv.pairs);
  const auto& all = out.corpus.pairs;
  if (all.size() <= p.validation_pairs)
    throw ValidationError("corpus '" + p.tsv.string() + "' has " + std::to_string(all.size()) +
                          " pairs, not more than validation_pairs = " + std::to_string(p.validation_pairs));
  const std::size_t n_train = std::min(p.train_pairs, all.size() - p.validation_pairs);
  out.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(all.end() - static_cast<std::ptrdiff_t>(p.validation_pairs), all.end());
  out.probe.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(p.probe_sentences, all.size())));
  return out;
}

model::TransformerConfig resolved_model(const RunConfig& config, const corpus::Corpus& corpus) {
  model::TransformerConfig m = config.model;
  m.source_vocab = corpus.source_vocab.size();
  m.target_vocab = corpus.target_vocab.size();
  m.source_combiner = m.target_combiner = config.combiner;
  const std::size_t need = longest(corpus.pairs);
  if (need > m.max_len)
    throw ValidationError("longest sentence has " + std::to_string(need) + " tokens, above model.max_len = " +
                          std::to_string(m.max_len));
  m.validate();
  return m;
}

TrainingRun train_run(const model::TransformerConfig& model_config, const TrainingParams& params,
                      const CorpusSplits& splits, std::uint64_t training_seed, const EpochCallback& on_epoch) {
  TrainingRun run{model::TransformerModel(model_config, stream_seed(training_seed, init_stream)), {}, {}, 0.0};
  numerics::AdamOptions adam_options;
  adam_options.warmup_steps = params.warmup_steps;
  adam_options.fixed_lr = params.fixed_lr;
  auto adam = model::make_optimizer(run.model, adam_options);
  const auto validation = corpus::make_batches(splits.validation, params.batch_size, 0, 0, false);
  run.initial = model::evaluate(run.model, validation);
  run.baseline_accuracy = model::unigram_baseline_accuracy(splits.train, splits.validation);
  const std::uint64_t shuffle = stream_seed(training_seed, shuffle_stream);
  const std::uint64_t dropout = stream_seed(training_seed, dropout_stream);
  for (std::size_t e = 0; e < params.epochs; ++e) {
    const auto batches = corpus::make_batches(splits.train, params.batch_size, shuffle, e);
    const auto train = model::train_epoch(run.model, adam, batches, stream_seed(dropout, e));
    const auto val = model::evaluate(run.model, validation);
    run.history.push_back({e + 1, train.loss, train.accuracy, val.loss, val.accuracy});
    if (on_epoch) on_epoch(run.history.back());
  }
  return run;
}

ProfileAnalysis analyze_profile(analysis::PositionalProfile profile, std::size_t k) {
  const std::size_t len = profile.length();
  if (len < 3)
    throw std::runtime_error("profile of " + profile.probe.name() + " keeps only " + std::to_string(len) +
                             " positions; at least 3 are needed");
  ProfileAnalysis out;
  out.pca = analysis::pca_fit(profile.means, std::min({k, len, profile.means.cols()}));
  out.coords = analysis::pca_transform(out.pca, profile.means);
  if (len >= 8) out.helix = analysis::helix_fit(numerics::slice_cols(out.coords, 0, 3));
  out.profile = std::move(profile);
  return out;
}

RawPeAnalysis analyze_raw_pe(std::size_t d_model, std::size_t rows, double base) {
  RawPeAnalysis out;
  out.rows = rows;
  const posenc::PositionalTable table(rows, d_model, base);
  out.pca = analysis::pca_fit(table.table(), 3);
  out.coords = analysis::pca_transform(out.pca, table.table());
  const Matrix plane = numerics::slice_cols(out.coords, 0, 2);
  out.self_intersects = analysis::polyline_self_intersects(plane);
  out.endpoint_gap = analysis::endpoint_gap_ratio(plane);
  return out;
}

int tag_label(corpus::PosTag tag) { return static_cast<int>(tag); }

int verboid_label(corpus::PosTag tag) {
  return tag == corpus::PosTag::adjuvant ? tag_label(corpus::PosTag::verb) : tag_label(tag);
}

PosClustering pos_clustering(const model::ProbeRecords& records, const analysis::PositionalProfile& profile,
                             const analysis::TokenFilter& filter, const AnalysisParams& params, std::uint64_t seed) {
  PosClustering out;
  out.probe = profile.probe;
  out.deltas = analysis::delta_decompose(records, profile, filter);
  const std::size_t n = out.deltas.size();
  if (n < std::max<std::size_t>(params.elbow_k_max, 8))
    throw std::runtime_error("PoS clustering at " + profile.probe.name() + " has only " + std::to_string(n) +
                             " filtered records");
  const std::size_t dims = std::min(params.cluster_dims, out.deltas.single.cols());
  out.pca = analysis::pca_fit(out.deltas.single, dims);
  out.reduced = analysis::pca_transform(out.pca, out.deltas.single);

  const analysis::KMeansOptions opts{seed, params.n_init, 300, params.threads};
  out.elbow = analysis::elbow_select(out.reduced, params.elbow_k_max, opts);

  std::vector<int> tags(n), merged(n);
  for (std::size_t i = 0; i < n; ++i) {
    tags[i] = tag_label(out.deltas.tag[i]);
    merged[i] = verboid_label(out.deltas.tag[i]);
  }
  out.two_stage = analysis::two_stage_clustering(out.reduced, opts, &tags, tag_label(corpus::PosTag::adjuvant));
  const auto s1 = analysis::cluster_eval(out.two_stage.stage1.assignments, merged);
  out.stage1_ari = s1.ari;
  out.stage1_purity = s1.purity;
  out.stage1_silhouette = analysis::silhouette(out.reduced, out.two_stage.stage1.assignments);
  out.two_stage.stage1.silhouette = out.stage1_silhouette;

  std::vector<std::size_t> split;
  std::vector<int> truth;
  for (std::size_t j = 0; j < out.two_stage.members.size(); ++j) {
    const auto tag = out.deltas.tag[out.two_stage.members[j]];
    if (tag != corpus::PosTag::verb && tag != corpus::PosTag::adjuvant) continue;
    split.push_back(out.two_stage.stage2.assignments[j]);
    truth.push_back(tag_label(tag));
  }
  out.stage2_scored = split.size();
  if (!split.empty()) out.stage2_purity = purity_of(split, truth);

  for (std::size_t c = 0; c < out.reduced.cols(); ++c) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, out.reduced(i, c));
      hi = std::max(hi, out.reduced(i, c));
    }
    out.coordinate_range = std::max(out.coordinate_range, hi - lo);
  }
  return out;
}

DigramComparison digram_comparison(const model::ProbeRecords& records, const analysis::PositionalProfile& profile,
                                   const analysis::TokenFilter& filter, const AnalysisParams& params,
                                   std::uint64_t seed) {
  DigramComparison out;
  out.probe = profile.probe;
  const auto deltas = analysis::delta_decompose(records, profile, filter);
  if (deltas.size() < 2) throw std::runtime_error("di-gram analysis at " + profile.probe.name() + " has too few records");
  const std::size_t dims = std::min(params.cluster_dims, deltas.single.cols());
  const auto pca = analysis::pca_fit(deltas.single, dims);
  const Matrix z = analysis::pca_transform(pca, deltas.single);
  const auto set = analysis::digram_features(z, deltas.sentence, deltas.position);
  out.digrams = set.first.size();
  std::vector<int> next(out.digrams);
  std::set<int> classes;
  for (std::size_t i = 0; i < out.digrams; ++i) {
    next[i] = tag_label(deltas.tag[set.second[i]]);
    classes.insert(next[i]);
  }
  out.k = classes.size();
  if (out.k < 2 || out.digrams < out.k)
    throw std::runtime_error("di-gram analysis at " + profile.probe.name() + " needs at least two next-token tags");
  const analysis::KMeansOptions opts{seed, params.n_init, 300, params.threads};
  out.single = analysis::kmeans_pp(analysis::select_rows(z, set.first), out.k, opts);
  out.digram = analysis::kmeans_pp(set.features, out.k, opts);
  out.single_purity = purity_of(out.single.assignments, next);
  out.digram_purity = purity_of(out.digram.assignments, next);
  return out;
}

TsneAnalysis tsne_analysis(const model::ProbeRecords& records, const analysis::PositionalProfile& profile,
                           const analysis::TokenFilter& filter, const TsneParams& params, std::uint64_t seed) {
  TsneAnalysis out;
  out.probe = profile.probe;
  out.deltas = analysis::delta_decompose(records, profile, filter);
  const std::size_t n = std::min(params.max_points, out.deltas.size());
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  analysis::TsneOptions opts;
  opts.perplexity = params.perplexity;
  opts.iterations = params.iterations;
  opts.learning_rate = params.learning_rate;
  opts.seed = seed;
  out.result = analysis::tsne(analysis::select_rows(out.deltas.single, rows), opts);
  return out;
}

analysis::TokenFilter make_filter(const corpus::Vocab& vocab) {
  return [keep = corpus::token_filter(vocab)](model::TokenId t) {
    return t >= 0 && static_cast<std::size_t>(t) < keep.size() && keep[static_cast<std::size_t>(t)];
  };
}

analysis::CollisionReport source_collisions(const model::TransformerModel& model, const corpus::Vocab& vocab,
                                            std::size_t positions) {
  const auto keep = corpus::token_filter(vocab);
  std::vector<model::TokenId> tokens;
  for (std::size_t t = 0; t < keep.size(); ++t)
    if (keep[t]) tokens.push_back(static_cast<model::TokenId>(t));
  const auto grid = analysis::combined_grid(model, true, tokens, positions);
  return analysis::collision_audit(grid.vectors, grid.keys);
}

const StrategySummary* CombinerComparison::find(const combiner::CombinerConfig& c) const {
  for (const auto* list : {&strategies, &sweep})
    for (const auto& s : *list)
      if (s.strategy == c) return &s;
  return nullptr;
}

model::TransformerConfig comparison_model(const RunConfig& config, const corpus::Corpus& corpus) {
  RunConfig c = config;
  if (config.compare.scale == "desk") {
    c.model = model::TransformerConfig::desk();
    c.model.max_len = config.model.max_len;
  } else if (config.compare.scale == "paper") {
    c.model = model::TransformerConfig::paper();
    c.model.max_len = config.model.max_len;
  }
  return resolved_model(c, corpus);
}

CombinerComparison compare_combiners(const RunConfig& config, const CorpusSplits& splits, bool include_sweep,
                                     const std::function<void(const StrategyRun&)>& on_run) {
  std::vector<combiner::CombinerConfig> order = config.compare.strategies;
  std::vector<combiner::CombinerConfig> sweep;
  if (include_sweep) {
    for (double w : config.compare.sweep) {
      const combiner::CombinerConfig c{.kind = combiner::CombinerKind::weighted_sum, .weight = w};
      sweep.push_back(c);
      if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
    }
  }
  const std::size_t seeds = config.compare.seeds;
  const model::TransformerConfig base = comparison_model(config, splits.corpus);

  CombinerComparison out;
  out.runs.resize(order.size() * seeds);
  for (std::size_t i = 0; i < out.runs.size(); ++i) {
    out.runs[i].strategy = order[i / seeds];
    out.runs[i].seed = config.seed + i % seeds;
  }

  std::atomic<std::size_t> next{0};
  std::mutex report;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < out.runs.size(); i = next++) {
      try {
        StrategyRun& r = out.runs[i];
        model::TransformerConfig m = base;
        m.source_combiner = m.target_combiner = r.strategy;
        const auto run = train_run(m, config.training, splits, r.seed);
        r.initial = run.initial;
        r.history = run.history;
        if (on_run) {
          const std::lock_guard lock(report);
          on_run(r);
        }
      } catch (...) {
        const std::lock_guard lock(report);
        if (!failure) failure = std::current_exception();
        next = out.runs.size();
      }
    }
  };
  std::size_t threads = config.compare.threads ? config.compare.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, out.runs.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  auto summarize = [&](const combiner::CombinerConfig& c) {
    const auto idx = static_cast<std::size_t>(std::find(order.begin(), order.end(), c) - order.begin());
    StrategySummary s{c, 0.0, 0.0};
    for (std::size_t k = 0; k < seeds; ++k) s.mean_final_loss += out.runs[idx * seeds + k].final_val_loss();
    s.mean_final_loss /= static_cast<double>(seeds);
    if (seeds > 1) {
      double ss = 0.0;
      for (std::size_t k = 0; k < seeds; ++k) {
        const double d = out.runs[idx * seeds + k].final_val_loss() - s.mean_final_loss;
        ss += d * d;
      }
      s.stddev_final_loss = std::sqrt(ss / static_cast<double>(seeds - 1));
    }
    return s;
  };
  for (const auto& c : config.compare.strategies) out.strategies.push_back(summarize(c));
  for (const auto& c : sweep) out.sweep.push_back(summarize(c));
  if (!out.sweep.empty()) {
    const auto best = std::min_element(out.sweep.begin(), out.sweep.end(), [](const auto& a, const auto& b) {
      return a.mean_final_loss < b.mean_final_loss;
    });
    out.sweep_optimum = best->strategy.weight;
  }
  return out;
}

}  // namespace helix::cli
