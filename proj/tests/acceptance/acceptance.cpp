// Runs every acceptance criterion and prints one PASS/FAIL line each.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "helix/cli/pipeline.hpp"
#include "helix/cli/selfcheck.hpp"
#include "helix/numerics/ops.hpp"
#include "helix/numerics/rng.hpp"
#include "helix/posenc/positional_table.hpp"
#include "oracles.hpp"

using namespace helix;
using cli::CheckResult;
using numerics::Matrix;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail, double seconds) {
  if (!pass) ++failures;
  std::printf("%s  %2d  %-38s %s [%.1fs]\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
}

template <class F>
void timed(int id, const std::string& name, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = false;
  try {
    pass = f(detail);
  } catch (const std::exception& e) {
    detail = std::string("threw: ") + e.what();
  }
  report(id, name, pass, detail, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

/// Sinusoidal table from the closed form, sines in the first half.
Matrix reference_table(std::size_t rows, std::size_t d) {
  Matrix t(rows, d);
  for (std::size_t p = 0; p < rows; ++p)
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle = static_cast<double>(p) / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
      t(p, i) = std::sin(angle);
      t(p, d / 2 + i) = std::cos(angle);
    }
  return t;
}

/// Covariance eigenvalues, descending, from Eigen's self-adjoint solver.
std::vector<double> reference_spectrum(const Matrix& x) {
  const Matrix cov = test::covariance(x);
  Eigen::MatrixXd c(cov.rows(), cov.cols());
  for (std::size_t i = 0; i < cov.rows(); ++i)
    for (std::size_t j = 0; j < cov.cols(); ++j) c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cov(i, j);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c, Eigen::EigenvaluesOnly).eigenvalues();
  std::vector<double> out(ev.data(), ev.data() + ev.size());
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

}  // namespace

int main() {
  std::cout << "acceptance: full-size model (d_model 128, 4 layers, 8 heads, d_ff 512), seed 1\n";

  timed(1, "PE identities", [](std::string& d) {
    const CheckResult r = cli::check_pe_identities(128);
    const posenc::PositionalTable table(249, 128);
    const double table_err = numerics::max_abs_diff(table.table(), reference_table(249, 128));
    d = r.detail + ", closed-form table error " + num(table_err);
    return r.pass && table_err < 1e-12;
  });

  timed(2, "Gradient fidelity", [](std::string& d) {
    const CheckResult r = cli::check_gradient_fidelity();
    d = r.detail;
    return r.pass;
  });

  timed(3, "Causality, padding, decode equivalence", [](std::string& d) {
    const CheckResult r = cli::check_model_invariants();
    d = r.detail;
    return r.pass;
  });

  cli::RunConfig cfg;
  cfg.experiment = "acceptance";
  cfg.seed = 1;
  cfg.validate();
  const auto splits = cli::prepare_corpus(cfg);
  const auto model_config = cli::resolved_model(cfg, splits.corpus);

  std::optional<cli::TrainingRun> run;
  timed(4, "Trainability", [&](std::string& d) {
    run.emplace(cli::train_run(model_config, cfg.training, splits, cfg.seed));
    const double init = run->initial.loss, fin = run->final_val_loss();
    const double acc = run->final_val_accuracy(), base = run->baseline_accuracy;
    d = "val loss " + num(init) + " -> " + num(fin) + " (limit " + num(0.5 * init) + "), accuracy " + num(acc) +
        " vs unigram baseline " + num(base) + " (limit " + num(5.0 * base) + "), " +
        std::to_string(splits.train.size()) + " pairs, " + std::to_string(cfg.training.epochs) + " epochs";
    return fin < 0.5 * init && acc >= 5.0 * base;
  });

  timed(5, "Combiner comparison", [&](std::string& d) {
    const auto cmp = cli::compare_combiners(cfg, splits, true);
    const auto* add = cmp.find({});
    const auto* la = cmp.find({.kind = combiner::CombinerKind::linear_add});
    const auto* ws = cmp.find({.kind = combiner::CombinerKind::weighted_sum, .weight = 0.3});
    const double delta = 0.5 * add->stddev_final_loss;
    d = "mean final val loss add " + num(add->mean_final_loss) + " (sd " + num(add->stddev_final_loss) +
        "), linear-add " + num(la->mean_final_loss) + ", weighted:0.3 " + num(ws->mean_final_loss) + ", delta " +
        num(delta) + "; sweep";
    for (const auto& s : cmp.sweep) d += " " + num(s.strategy.weight) + ":" + num(s.mean_final_loss);
    d += ", optimum w = " + num(*cmp.sweep_optimum) + " (" + cfg.compare.scale + " scale, " +
         std::to_string(cfg.compare.seeds) + " seeds)";
    return la->mean_final_loss <= add->mean_final_loss - delta && ws->mean_final_loss <= add->mean_final_loss - delta;
  });

  const auto raw = cli::analyze_raw_pe(128, 80);
  timed(6, "Raw-PE spectrum", [&](std::string& d) {
    const auto ref = reference_spectrum(reference_table(80, 128));
    double total = 0.0, spec_err = 0.0;
    for (double v : ref) total += v;
    for (std::size_t i = 0; i < 3; ++i) spec_err = std::max(spec_err, std::abs(raw.pca.explained_variance_ratio[i] - ref[i] / total));
    const double share = (ref[0] + ref[1] + ref[2]) / total;
    d = "top-3 share " + num(share) + " (limit 0.5), spectrum error vs independent eigensolve " + num(spec_err) +
        ", endpoint gap " + num(raw.endpoint_gap) + (raw.self_intersects ? ", self-intersecting" : ", simple curve");
    return share < 0.5 && spec_err < 1e-9 && raw.open_arch();
  });

  model::EmbeddingDump dump;
  std::map<model::ProbePoint, cli::ProfileAnalysis> profiles;
  const auto profile = [&](const model::ProbePoint& p) -> const cli::ProfileAnalysis& {
    if (!profiles.count(p))
      profiles.emplace(p, cli::analyze_profile(analysis::distill_positions(dump.at(p), p, cfg.analysis.min_count),
                                               cfg.analysis.pca_k));
    return profiles.at(p);
  };
  if (run) dump = model::probe_run(run->model, splits.probe, cfg.probe_list());
  const auto need_model = [&] {
    if (!run) throw std::runtime_error("criterion 4 produced no model");
  };

  const model::ProbePoint enc = cfg.encoder_output();
  timed(7, "Emergent encoder helix", [&](std::string& d) {
    need_model();
    const auto& a = profile(enc);
    const double share = a.top3_share(), base = raw.top3_share();
    if (!a.helix) throw std::runtime_error("profile too short for a helix fit");
    const auto& h = *a.helix;
    const bool strict = share >= 2.0 * base && h.residual_ratio < 0.25 && h.axis_linearity > 0.9;
    const bool trend = share > base;
    d = std::string(strict ? "thresholds met" : (trend ? "trend only" : "no trend")) + ": top-3 share " + num(share) +
        " vs raw PE " + num(base) + " (limit " + num(2.0 * base) + "), residual ratio " + num(h.residual_ratio) +
        ", axis linearity " + num(h.axis_linearity) + ", " + std::to_string(a.profile.length()) + " positions";
    return strict || trend;
  });

  timed(8, "Decoder helix location", [&](std::string& d) {
    need_model();
    const model::ProbePoint mid = cfg.analysis.mid_attention;
    const model::ProbePoint tgt{model::ProbeKind::tgt_combined, 0};
    const model::ProbePoint fin = model::decoder_out(cfg.model.num_layers);
    const double m = profile(mid).top3_share(), t = profile(tgt).top3_share(), f = profile(fin).top3_share();
    d = "top-3 share " + mid.name() + " " + num(m) + ", " + tgt.name() + " " + num(t) + ", " + fin.name() + " " + num(f);
    return m > t && m > f;
  });

  std::optional<cli::PosClustering> pre, post;
  timed(9, "PoS clustering", [&](std::string& d) {
    need_model();
    const model::ProbePoint src{model::ProbeKind::src_combined, 0};
    const auto filter = cli::make_filter(splits.corpus.source_vocab);
    pre.emplace(cli::pos_clustering(dump.at(src), profile(src).profile, filter, cfg.analysis, cfg.seed));
    post.emplace(cli::pos_clustering(dump.at(enc), profile(enc).profile, filter, cfg.analysis, cfg.seed));
    d = "ARI " + num(pre->stage1_ari) + " -> " + num(post->stage1_ari) + ", silhouette " + num(pre->stage1_silhouette) +
        " -> " + num(post->stage1_silhouette) + ", stage-2 purity " + num(pre->stage2_purity) + " -> " +
        num(post->stage2_purity) + " (limits 0.7 post, 0.15 gap), " + std::to_string(post->deltas.size()) + " tokens";
    return post->stage1_ari > pre->stage1_ari && post->stage1_silhouette > pre->stage1_silhouette &&
           post->stage2_purity >= 0.7 && pre->stage2_purity <= post->stage2_purity - 0.15;
  });

  timed(10, "Range compression", [&](std::string& d) {
    if (!pre || !post) throw std::runtime_error("criterion 9 produced no clustering");
    const double ratio = pre->coordinate_range / post->coordinate_range;
    d = "coordinate range " + num(pre->coordinate_range) + " -> " + num(post->coordinate_range) + ", ratio " +
        num(ratio) + " (limit 2)";
    return ratio > 2.0;
  });

  timed(11, "Di-gram effect", [&](std::string& d) {
    need_model();
    const model::ProbePoint p = cfg.post_attention();
    const auto r = cli::digram_comparison(dump.at(p), profile(p).profile, cli::make_filter(splits.corpus.target_vocab),
                                          cfg.analysis, cfg.seed);
    d = "next-token tag purity single " + num(r.single_purity) + ", di-gram " + num(r.digram_purity) + " (limit gain 0.05), " +
        p.name() + ", k = " + std::to_string(r.k) + ", " + std::to_string(r.digrams) + " di-grams";
    return r.digram_purity >= r.single_purity + 0.05;
  });

  timed(12, "Oracle equivalences", [](std::string& d) {
    const CheckResult r = cli::check_oracle_equivalences();
    numerics::Rng rng(77);
    double err = 0.0;
    for (int i = 0; i < 100; ++i) {
      Matrix x(10, 3);
      for (double& v : x.values()) v = rng.normal();
      const auto e = test::symmetric3_eigenvalues(test::covariance(x));
      const auto pca = analysis::pca_fit(x, 3);
      for (std::size_t c = 0; c < 3; ++c) err = std::max(err, std::abs(pca.explained_variance[c] - e[c]));
    }
    d = r.detail + "; test-side oracle eigenvalue error " + num(err);
    return r.pass && err < 1e-8;
  });

  timed(13, "t-SNE sanity", [&](std::string& d) {
    const CheckResult blobs = cli::check_tsne_two_blobs();
    d = "two blobs: " + blobs.detail;
    need_model();
    const auto t = cli::tsne_analysis(dump.at(enc), profile(enc).profile, cli::make_filter(splits.corpus.source_vocab),
                                      cfg.analysis.tsne, cfg.seed);
    d += "; " + enc.name() + " n = " + std::to_string(t.result.embedding.rows()) + " KL " + num(t.result.initial_kl()) +
         " -> " + num(t.result.final_kl());
    return blobs.pass && t.result.final_kl() < t.result.initial_kl();
  });

  std::cout << "acceptance: " << 13 - failures << " of 13 criteria pass\n";
  return 0;
}
