#include "helix/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "helix/analysis/export.hpp"
#include "helix/cli/config.hpp"
#include "helix/cli/pipeline.hpp"
#include "helix/cli/selfcheck.hpp"
#include "helix/model/checkpoint.hpp"
#include "helix/model/tensor_file.hpp"
#include "helix/numerics/ops.hpp"

namespace helix::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using model::ProbePoint;

namespace {

const std::vector<std::string> kSubcommands{"gen-corpus", "train",   "probe",   "distill", "pca",
                                            "helix",      "cluster", "digram",  "tsne",    "collide",
                                            "compare-combiners",     "report",  "export"};
const std::vector<std::string> kExportKinds{"pca2d",           "pca3d",        "variance-bars",
                                            "cluster-scatter", "tsne-scatter", "loss-curves"};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw std::runtime_error("'" + p.string() + "' is not valid JSON: " + e.what());
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

Matrix matrix_from_json(const json& rows) {
  const std::size_t n = rows.size(), d = n ? rows[0].size() : 0;
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) m(i, c) = rows[i][c].get<double>();
  return m;
}

struct Context {
  RunConfig config;
  std::string hash;
  fs::path root;
  std::ostream& log;
};

/// Artifact directory of one subcommand. Created on the first write; the
/// manifest lists every input and output.
class Stage {
 public:
  Stage(const Context& ctx, std::string name) : ctx_(ctx), name_(std::move(name)), dir_(ctx.root / name_) {}

  const fs::path& dir() const noexcept { return dir_; }

  /// Path of a prior artifact; a missing one is a validation error.
  fs::path require(const std::string& stage, const std::string& file) {
    const fs::path p = ctx_.root / stage / file;
    if (!fs::exists(p))
      throw ValidationError("missing input " + stage + "/" + file + " (run '" + stage + "' first)");
    inputs_.push_back(stage + "/" + file);
    return p;
  }

  void external_input(const fs::path& p) { inputs_.push_back(p.string()); }

  fs::path output(const std::string& file) {
    fs::create_directories(dir_);
    if (std::find(outputs_.begin(), outputs_.end(), file) == outputs_.end()) outputs_.push_back(file);
    return dir_ / file;
  }

  void write(const std::string& file, const std::string& text) {
    std::ofstream out(output(file), std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write '" + (dir_ / file).string() + "'");
  }

  void write_json(const std::string& file, const json& j) { write(file, j.dump(2) + "\n"); }

  void finish() {
    json outs = json::array();
    for (const auto& f : outputs_) outs.push_back({{"file", f}, {"fnv1a", fnv1a_hex(read_file(dir_ / f))}});
    json manifest{{"subcommand", name_},
                  {"experiment", ctx_.config.experiment},
                  {"seed", ctx_.config.seed},
                  {"config_hash", ctx_.hash},
                  {"inputs", inputs_},
                  {"outputs", outs},
                  {"timestamp", utc_timestamp()}};
    fs::create_directories(dir_);
    std::ofstream(dir_ / "manifest.json", std::ios::binary) << manifest.dump(2) << "\n";
    ctx_.log << name_ << ": wrote " << outputs_.size() << " artifacts to " << dir_.string() << "\n";
  }

 private:
  const Context& ctx_;
  std::string name_;
  fs::path dir_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
};

CorpusSplits corpus_for(const Context& ctx, Stage& stage) {
  if (!ctx.config.corpus.tsv.empty()) stage.external_input(ctx.config.corpus.tsv);
  return prepare_corpus(ctx.config);
}

model::TransformerModel load_model(const Context& ctx, Stage& stage, const CorpusSplits& splits) {
  model::TransformerModel m(resolved_model(ctx.config, splits.corpus), 0);
  model::load_checkpoint(m, stage.require("train", "model.hlxp"));
  return m;
}

std::map<ProbePoint, analysis::PositionalProfile> load_profiles(Stage& stage) {
  std::map<ProbePoint, analysis::PositionalProfile> out;
  std::map<std::string, Matrix> tensors;
  for (auto& t : model::load_tensors(stage.require("distill", "profiles.hlxp"))) tensors[t.name] = std::move(t.value);
  for (const auto& [name, means] : tensors) {
    const auto dot = name.rfind(".means");
    if (dot == std::string::npos || dot + 6 != name.size()) continue;
    analysis::PositionalProfile p;
    p.probe = ProbePoint::parse(name.substr(0, dot));
    p.means = means;
    const Matrix& counts = tensors.at(name.substr(0, dot) + ".counts");
    for (double c : counts.values()) p.counts.push_back(static_cast<std::size_t>(c));
    out.emplace(p.probe, std::move(p));
  }
  return out;
}

const model::ProbeRecords& records_at(const model::EmbeddingDump& dump, const ProbePoint& probe) {
  if (!dump.records.count(probe))
    throw ValidationError("probe " + probe.name() + " was not captured; add it to 'probes' and rerun 'probe'");
  return dump.records.at(probe);
}

const analysis::PositionalProfile& profile_at(const std::map<ProbePoint, analysis::PositionalProfile>& profiles,
                                              const ProbePoint& probe) {
  const auto it = profiles.find(probe);
  if (it == profiles.end() || it->second.length() == 0)
    throw std::runtime_error("no positional profile for " + probe.name() + " (min_count too high for the probe set?)");
  return it->second;
}

analysis::TokenFilter filter_for(const CorpusSplits& splits, const ProbePoint& probe) {
  return make_filter(probe.source_side() ? splits.corpus.source_vocab : splits.corpus.target_vocab);
}

const corpus::Vocab& vocab_for(const CorpusSplits& splits, const ProbePoint& probe) {
  return probe.source_side() ? splits.corpus.source_vocab : splits.corpus.target_vocab;
}

/// sentence, position, token, tag and label columns of a point set.
Matrix meta_matrix(const analysis::DeltaVectors& d, const std::vector<std::size_t>& rows,
                   const std::vector<std::size_t>* labels) {
  Matrix m(rows.size(), 5);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    m(i, 0) = static_cast<double>(d.sentence[r]);
    m(i, 1) = static_cast<double>(d.position[r]);
    m(i, 2) = static_cast<double>(d.token[r]);
    m(i, 3) = static_cast<double>(d.tag[r]);
    m(i, 4) = labels ? static_cast<double>((*labels)[i]) : -1.0;
  }
  return m;
}

json history_json(const model::EpochMetrics& initial, const std::vector<EpochRecord>& history) {
  json h = json::array();
  h.push_back({{"epoch", 0}, {"val_loss", initial.loss}, {"val_accuracy", initial.accuracy}});
  for (const auto& e : history)
    h.push_back({{"epoch", e.epoch},
                 {"train_loss", e.train_loss},
                 {"train_accuracy", e.train_accuracy},
                 {"val_loss", e.val_loss},
                 {"val_accuracy", e.val_accuracy}});
  return h;
}

void write_history_rows(std::ostream& out, const std::string& strategy, std::uint64_t seed, const json& history) {
  for (const auto& e : history) {
    out << strategy << ',' << seed << ',' << e["epoch"].get<std::size_t>() << ',';
    if (e.contains("train_loss")) out << e["train_loss"].get<double>();
    out << ',' << e["val_loss"].get<double>() << ',' << e["val_accuracy"].get<double>() << '\n';
  }
}

constexpr const char* kLossHeader = "strategy,seed,epoch,train_loss,val_loss,val_accuracy\n";

std::ostringstream csv_stream() {
  std::ostringstream out;
  out.precision(17);
  return out;
}

// ---------------------------------------------------------------- subcommands

void cmd_gen_corpus(const Context& ctx) {
  Stage stage(ctx, "gen-corpus");
  const auto splits = corpus_for(ctx, stage);
  const auto tsv = [&](const std::string& file, const std::vector<corpus::TokenizedPair>& pairs) {
    std::ostringstream out;
    corpus::write_tsv(splits.corpus, pairs, out);
    stage.write(file, out.str());
  };
  tsv("train.tsv", splits.train);
  tsv("validation.tsv", splits.validation);
  tsv("probe.tsv", splits.probe);
  for (const auto& [file, vocab] : {std::pair{"source_vocab.tsv", &splits.corpus.source_vocab},
                                    std::pair{"target_vocab.tsv", &splits.corpus.target_vocab}}) {
    std::ostringstream out;
    corpus::write_vocab(*vocab, out);
    stage.write(file, out.str());
  }
  std::size_t longest = 0;
  for (const auto& p : splits.corpus.pairs) longest = std::max({longest, p.source.size(), p.target.size()});
  stage.write_json("corpus.json", {{"artifact", "corpus"},
                                   {"tagged", splits.corpus.tagged},
                                   {"train_pairs", splits.train.size()},
                                   {"validation_pairs", splits.validation.size()},
                                   {"probe_sentences", splits.probe.size()},
                                   {"source_vocab", splits.corpus.source_vocab.size()},
                                   {"target_vocab", splits.corpus.target_vocab.size()},
                                   {"longest_sequence", longest}});
  stage.finish();
}

void cmd_train(const Context& ctx) {
  Stage stage(ctx, "train");
  const auto splits = corpus_for(ctx, stage);
  const auto mc = resolved_model(ctx.config, splits.corpus);
  const std::size_t epochs = ctx.config.training.epochs;
  const auto run = train_run(mc, ctx.config.training, splits, ctx.config.seed, [&](const EpochRecord& e) {
    ctx.log << "epoch " << e.epoch << "/" << epochs << " train_loss " << e.train_loss << " val_loss " << e.val_loss
            << " val_accuracy " << e.val_accuracy << std::endl;
  });
  model::save_checkpoint(run.model, stage.output("model.hlxp"));
  const json history = history_json(run.initial, run.history);
  auto csv = csv_stream();
  csv << kLossHeader;
  write_history_rows(csv, combiner::to_string(ctx.config.combiner), ctx.config.seed, history);
  stage.write("history.csv", csv.str());
  stage.write_json("training.json", {{"artifact", "training"},
                                     {"scale", ctx.config.scale},
                                     {"d_model", mc.d_model},
                                     {"num_layers", mc.num_layers},
                                     {"num_heads", mc.num_heads},
                                     {"d_ff", mc.d_ff},
                                     {"dropout", mc.dropout},
                                     {"combiner", combiner::to_string(ctx.config.combiner)},
                                     {"parameters", run.model.scalar_count()},
                                     {"train_pairs", splits.train.size()},
                                     {"epochs", epochs},
                                     {"seed", ctx.config.seed},
                                     {"initial_val_loss", run.initial.loss},
                                     {"initial_val_accuracy", run.initial.accuracy},
                                     {"final_val_loss", run.final_val_loss()},
                                     {"final_val_accuracy", run.final_val_accuracy()},
                                     {"baseline_accuracy", run.baseline_accuracy},
                                     {"history", history}});
  stage.finish();
}

void cmd_probe(const Context& ctx) {
  Stage stage(ctx, "probe");
  const auto splits = corpus_for(ctx, stage);
  const auto m = load_model(ctx, stage, splits);
  const auto probes = ctx.config.probe_list();
  const auto dump = model::probe_run(m, splits.probe, probes);
  model::save_dump(dump, stage.output("embeddings.hlxp"));
  json counts = json::object();
  for (const auto& [p, r] : dump.records) counts[p.name()] = r.size();
  stage.write_json("probes.json",
                   {{"artifact", "probes"}, {"tagged", dump.tagged}, {"sentences", splits.probe.size()}, {"records", counts}});
  stage.finish();
}

void cmd_distill(const Context& ctx) {
  Stage stage(ctx, "distill");
  const auto dump = model::load_dump(stage.require("probe", "embeddings.hlxp"));
  std::vector<model::NamedTensor> tensors;
  json summary = json::object();
  for (const auto& [probe, records] : dump.records) {
    const auto profile = analysis::distill_positions(records, probe, ctx.config.analysis.min_count);
    summary[probe.name()] = {{"length", profile.length()}, {"counts", profile.counts}};
    if (profile.length() == 0) continue;
    Matrix counts(1, profile.length());
    for (std::size_t i = 0; i < profile.length(); ++i) counts(0, i) = static_cast<double>(profile.counts[i]);
    tensors.push_back({probe.name() + ".means", profile.means});
    tensors.push_back({probe.name() + ".counts", counts});
  }
  model::save_tensors(stage.output("profiles.hlxp"), tensors);
  stage.write_json("profiles.json",
                   {{"artifact", "profiles"}, {"min_count", ctx.config.analysis.min_count}, {"probes", summary}});
  stage.finish();
}

json pca_json(const analysis::PcaModel& pca, const Matrix& coords) {
  return {{"explained_variance", pca.explained_variance},
          {"explained_variance_ratio", pca.explained_variance_ratio},
          {"total_variance", pca.total_variance},
          {"top3_share", pca.share(std::min<std::size_t>(3, pca.k()))},
          {"length", coords.rows()},
          {"coords", matrix_json(coords)}};
}

void cmd_pca(const Context& ctx) {
  Stage stage(ctx, "pca");
  const auto profiles = load_profiles(stage);
  const auto& mc = ctx.config.model;
  const auto raw = analyze_raw_pe(mc.d_model, ctx.config.analysis.raw_pe_rows, mc.pe_base);
  json raw_j = pca_json(raw.pca, raw.coords);
  raw_j["self_intersects"] = raw.self_intersects;
  raw_j["endpoint_gap"] = raw.endpoint_gap;
  raw_j["open_arch"] = raw.open_arch();
  json probes = json::object();
  for (const auto& [probe, profile] : profiles) {
    if (profile.length() < 3) {
      probes[probe.name()] = {{"skipped", "fewer than 3 positions"}, {"length", profile.length()}};
      continue;
    }
    const auto a = analyze_profile(profile, ctx.config.analysis.pca_k);
    probes[probe.name()] = pca_json(a.pca, a.coords);
  }
  stage.write_json("pca.json", {{"artifact", "pca"}, {"raw_pe", raw_j}, {"probes", probes}});
  stage.finish();
}

json helix_json(const analysis::HelixFit& h) {
  return {{"axis", h.axis},
          {"pitch", h.pitch},
          {"axis_step", h.axis_step},
          {"center", {h.center[0], h.center[1]}},
          {"radius", h.radius},
          {"residual_ratio", h.residual_ratio},
          {"axis_linearity", h.axis_linearity},
          {"sweep", h.sweep},
          {"shape", analysis::to_string(h.shape)}};
}

void cmd_helix(const Context& ctx) {
  Stage stage(ctx, "helix");
  const json pca = read_json(stage.require("pca", "pca.json"));
  json fits = json::object();
  const auto fit = [&](const std::string& name, const json& entry) {
    if (entry.contains("skipped")) return;
    const Matrix coords = matrix_from_json(entry["coords"]);
    if (coords.rows() < 8 || coords.cols() < 3) {
      fits[name] = {{"skipped", "needs at least 8 positions and 3 components"}};
      return;
    }
    fits[name] = helix_json(analysis::helix_fit(numerics::slice_cols(coords, 0, 3)));
  };
  fit("raw_pe", pca["raw_pe"]);
  for (const auto& [name, entry] : pca["probes"].items()) fit(name, entry);
  stage.write_json("helix.json", {{"artifact", "helix"},
                                  {"encoder_output", ctx.config.encoder_output().name()},
                                  {"fits", fits}});
  stage.finish();
}

void cmd_cluster(const Context& ctx) {
  Stage stage(ctx, "cluster");
  const auto splits = corpus_for(ctx, stage);
  const auto dump = model::load_dump(stage.require("probe", "embeddings.hlxp"));
  const auto profiles = load_profiles(stage);
  const std::vector<std::pair<std::string, ProbePoint>> roles{{"pre_encoder", {model::ProbeKind::src_combined, 0}},
                                                              {"post_encoder", ctx.config.encoder_output()},
                                                              {"mid_attention", ctx.config.analysis.mid_attention}};
  json probes = json::object();
  json role_names = json::object();
  std::vector<model::NamedTensor> tensors;
  std::map<std::string, double> ranges;
  for (const auto& [role, probe] : roles) {
    const auto c = pos_clustering(records_at(dump, probe), profile_at(profiles, probe), filter_for(splits, probe),
                                  ctx.config.analysis, ctx.config.seed);
    ranges[role] = c.coordinate_range;
    role_names[role] = probe.name();
    std::vector<std::size_t> rows(c.deltas.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    tensors.push_back({probe.name() + ".reduced", c.reduced});
    tensors.push_back({probe.name() + ".meta", meta_matrix(c.deltas, rows, &c.two_stage.stage1.assignments)});
    probes[probe.name()] = {
        {"records", c.deltas.size()},
        {"explained_variance_ratio", c.pca.explained_variance_ratio},
        {"elbow",
         {{"inertia", c.elbow.inertia},
          {"curvature", c.elbow.curvature},
          {"suggested_k", c.elbow.suggested_k},
          {"boundary", c.elbow.boundary},
          {"low_confidence", c.elbow.low_confidence}}},
        {"stage1",
         {{"k", 3}, {"ari", c.stage1_ari}, {"purity", c.stage1_purity}, {"silhouette", c.stage1_silhouette},
          {"inertia", c.two_stage.stage1.inertia}}},
        {"stage2",
         {{"verboid_cluster", c.two_stage.verboid},
          {"members", c.two_stage.members.size()},
          {"scored", c.stage2_scored},
          {"purity", c.stage2_purity}}},
        {"coordinate_range", c.coordinate_range}};
  }
  model::save_tensors(stage.output("points.hlxp"), tensors);
  stage.write_json("cluster.json", {{"artifact", "cluster"},
                                    {"roles", role_names},
                                    {"probes", probes},
                                    {"range_ratio", ranges["pre_encoder"] / ranges["post_encoder"]}});
  stage.finish();
}

void cmd_digram(const Context& ctx) {
  Stage stage(ctx, "digram");
  const auto splits = corpus_for(ctx, stage);
  const auto dump = model::load_dump(stage.require("probe", "embeddings.hlxp"));
  const auto profiles = load_profiles(stage);
  const ProbePoint probe = ctx.config.post_attention();
  const auto d = digram_comparison(records_at(dump, probe), profile_at(profiles, probe), filter_for(splits, probe),
                                   ctx.config.analysis, ctx.config.seed);
  stage.write_json("digram.json", {{"artifact", "digram"},
                                   {"probe", probe.name()},
                                   {"k", d.k},
                                   {"digrams", d.digrams},
                                   {"single_purity", d.single_purity},
                                   {"digram_purity", d.digram_purity},
                                   {"gain", d.digram_purity - d.single_purity}});
  stage.finish();
}

void cmd_tsne(const Context& ctx) {
  Stage stage(ctx, "tsne");
  const auto splits = corpus_for(ctx, stage);
  const auto dump = model::load_dump(stage.require("probe", "embeddings.hlxp"));
  const auto profiles = load_profiles(stage);
  json runs = json::object();
  std::vector<model::NamedTensor> tensors;
  for (const ProbePoint& probe : {ctx.config.encoder_output(), ctx.config.analysis.mid_attention}) {
    const auto t = tsne_analysis(records_at(dump, probe), profile_at(profiles, probe), filter_for(splits, probe),
                                 ctx.config.analysis.tsne, ctx.config.seed);
    std::vector<std::size_t> rows(t.result.embedding.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    tensors.push_back({probe.name() + ".embedding", t.result.embedding});
    tensors.push_back({probe.name() + ".meta", meta_matrix(t.deltas, rows, nullptr)});
    json trace = json::array();
    for (const auto& [it, kl] : t.result.kl_trace) trace.push_back({it, kl});
    runs[probe.name()] = {{"points", rows.size()},
                          {"initial_kl", t.result.initial_kl()},
                          {"final_kl", t.result.final_kl()},
                          {"kl_trace", trace}};
  }
  model::save_tensors(stage.output("points.hlxp"), tensors);
  stage.write_json("tsne.json", {{"artifact", "tsne"},
                                 {"perplexity", ctx.config.analysis.tsne.perplexity},
                                 {"iterations", ctx.config.analysis.tsne.iterations},
                                 {"runs", runs}});
  stage.finish();
}

void cmd_collide(const Context& ctx) {
  Stage stage(ctx, "collide");
  const auto splits = corpus_for(ctx, stage);
  const auto m = load_model(ctx, stage, splits);
  const auto r = source_collisions(m, splits.corpus.source_vocab, ctx.config.analysis.collision_positions);
  const auto key = [&](const analysis::GridKey& k) {
    return json{{"token", splits.corpus.source_vocab.word(k.first)}, {"position", k.second}};
  };
  stage.write_json("collide.json", {{"artifact", "collide"},
                                    {"positions", ctx.config.analysis.collision_positions},
                                    {"pairs", r.pairs},
                                    {"min_distance", r.min_distance},
                                    {"p01_distance", r.p01_distance},
                                    {"closest", {key(r.argmin_a), key(r.argmin_b)}}});
  stage.finish();
}

json summary_json(const StrategySummary& s) {
  return {{"strategy", combiner::to_string(s.strategy)}, {"mean_final_val_loss", s.mean_final_loss},
          {"stddev_final_val_loss", s.stddev_final_loss}};
}

void cmd_compare(const Context& ctx) {
  Stage stage(ctx, "compare-combiners");
  const auto splits = corpus_for(ctx, stage);
  const auto cmp = compare_combiners(ctx.config, splits, !ctx.config.compare.sweep.empty(), [&](const StrategyRun& r) {
    ctx.log << "compare: " << combiner::to_string(r.strategy) << " seed " << r.seed << " final val_loss "
            << r.final_val_loss() << std::endl;
  });
  auto csv = csv_stream();
  csv << kLossHeader;
  json runs = json::array();
  for (const auto& r : cmp.runs) {
    const json h = history_json(r.initial, r.history);
    write_history_rows(csv, combiner::to_string(r.strategy), r.seed, h);
    runs.push_back({{"strategy", combiner::to_string(r.strategy)}, {"seed", r.seed}, {"history", h}});
  }
  stage.write("loss_curves.csv", csv.str());
  json strategies = json::array(), sweep = json::array();
  for (const auto& s : cmp.strategies) strategies.push_back(summary_json(s));
  for (const auto& s : cmp.sweep) sweep.push_back(summary_json(s));
  const auto mc = comparison_model(ctx.config, splits.corpus);
  stage.write_json("compare.json", {{"artifact", "compare"},
                                    {"scale", ctx.config.compare.scale},
                                    {"d_model", mc.d_model},
                                    {"num_layers", mc.num_layers},
                                    {"epochs", ctx.config.training.epochs},
                                    {"seeds", ctx.config.compare.seeds},
                                    {"strategies", strategies},
                                    {"sweep", sweep},
                                    {"sweep_optimum", cmp.sweep_optimum ? json(*cmp.sweep_optimum) : json()},
                                    {"runs", runs}});
  stage.finish();
}

// ---------------------------------------------------------------- report

struct Criterion {
  int id;
  std::string name;
  std::string status;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string pass_fail(bool ok) { return ok ? "PASS" : "FAIL"; }

class Artifacts {
 public:
  explicit Artifacts(const fs::path& root) : root_(root) {}

  const json* get(const std::string& stage, const std::string& file) {
    const std::string key = stage + "/" + file;
    if (!cache_.count(key)) {
      const fs::path p = root_ / stage / file;
      if (fs::exists(p)) {
        cache_[key] = read_json(p);
        present_.insert(key);
      } else {
        cache_[key] = nullptr;
        missing_.insert(key);
      }
    }
    return present_.count(key) ? &cache_[key] : nullptr;
  }

  const std::set<std::string>& missing() const { return missing_; }
  const std::set<std::string>& present() const { return present_; }

 private:
  fs::path root_;
  std::map<std::string, json> cache_;
  std::set<std::string> present_, missing_;
};

double top3(const json& pca, const std::string& probe) {
  const json& p = pca["probes"][probe];
  if (p.contains("skipped")) return std::nan("");
  return p["top3_share"].get<double>();
}

std::vector<Criterion> acceptance(const RunConfig& cfg, Artifacts& a) {
  std::vector<Criterion> out;
  const auto check = [&](int id, const std::string& name, const CheckResult& r) {
    out.push_back({id, name, pass_fail(r.pass), r.detail});
  };
  const auto not_run = [&](int id, const std::string& name, const std::string& need) {
    out.push_back({id, name, "not run", "needs " + need});
  };

  check(1, "PE identities", check_pe_identities(128));
  check(2, "Gradient fidelity", check_gradient_fidelity());
  check(3, "Causality, padding, decode equivalence", check_model_invariants());

  if (const json* t = a.get("train", "training.json")) {
    const double init = (*t)["initial_val_loss"], fin = (*t)["final_val_loss"];
    const double acc = (*t)["final_val_accuracy"], base = (*t)["baseline_accuracy"];
    out.push_back({4, "Trainability", pass_fail(fin < 0.5 * init && acc >= 5.0 * base),
                   "val loss " + num(init) + " -> " + num(fin) + ", accuracy " + num(acc) + " vs baseline " +
                       num(base) + " (" + (*t)["scale"].get<std::string>() + " scale, " +
                       std::to_string((*t)["epochs"].get<std::size_t>()) + " epochs)"});
  } else {
    not_run(4, "Trainability", "train/training.json");
  }

  if (const json* c = a.get("compare-combiners", "compare.json")) {
    std::map<std::string, std::pair<double, double>> s;
    for (const auto& e : (*c)["strategies"])
      s[e["strategy"]] = {e["mean_final_val_loss"].get<double>(), e["stddev_final_val_loss"].get<double>()};
    if (s.count("add") && s.count("linear-add") && s.count("weighted:0.3")) {
      const double delta = 0.5 * s["add"].second;
      const double add = s["add"].first, la = s["linear-add"].first, ws = s["weighted:0.3"].first;
      std::string opt = (*c)["sweep_optimum"].is_null() ? "none" : num((*c)["sweep_optimum"].get<double>());
      out.push_back({5, "Combiner comparison", pass_fail(la <= add - delta && ws <= add - delta),
                     "mean final val loss add " + num(add) + ", linear-add " + num(la) + ", weighted:0.3 " + num(ws) +
                         ", delta " + num(delta) + "; sweep optimum w = " + opt});
    } else {
      out.push_back({5, "Combiner comparison", "not run", "strategies add, weighted:0.3 and linear-add not all compared"});
    }
  } else {
    not_run(5, "Combiner comparison", "compare-combiners/compare.json");
  }

  const json* pca = a.get("pca", "pca.json");
  const json* helix = a.get("helix", "helix.json");
  if (pca) {
    const json& raw = (*pca)["raw_pe"];
    const double share = raw["top3_share"];
    const bool arch = raw["open_arch"];
    out.push_back({6, "Raw-PE spectrum", pass_fail(share < 0.5 && arch),
                   "top-3 share " + num(share) + " (limit 0.5), " + (arch ? "open arch" : "not an open arch") +
                       ", endpoint gap " + num(raw["endpoint_gap"].get<double>())});
  } else {
    not_run(6, "Raw-PE spectrum", "pca/pca.json");
  }

  const std::string enc = cfg.encoder_output().name();
  if (pca && helix && (*pca)["probes"].contains(enc) && (*helix)["fits"].contains(enc) &&
      !(*helix)["fits"][enc].contains("skipped")) {
    const double raw = (*pca)["raw_pe"]["top3_share"], share = top3(*pca, enc);
    const json& h = (*helix)["fits"][enc];
    const double res = h["residual_ratio"], lin = h["axis_linearity"];
    const bool strict = share >= 2.0 * raw && res < 0.25 && lin > 0.9;
    const bool trend = share > raw;
    out.push_back({7, "Emergent encoder helix", strict ? "PASS" : (trend ? "PASS (trend)" : "FAIL"),
                   "top-3 share " + num(share) + " vs raw PE " + num(raw) + ", residual ratio " + num(res) +
                       ", axis linearity " + num(lin)});
  } else {
    not_run(7, "Emergent encoder helix", "pca/pca.json and helix/helix.json with " + enc);
  }

  const std::size_t layers = cfg.model.num_layers;
  const std::string mid = cfg.analysis.mid_attention.name();
  const std::string tgt = ProbePoint{model::ProbeKind::tgt_combined, 0}.name();
  const std::string fin = model::decoder_out(layers).name();
  if (pca && (*pca)["probes"].contains(mid) && (*pca)["probes"].contains(tgt) && (*pca)["probes"].contains(fin)) {
    const double m = top3(*pca, mid), t = top3(*pca, tgt), f = top3(*pca, fin);
    const bool ok = m > t && (mid == fin || m > f);
    out.push_back({8, "Decoder helix location", pass_fail(ok),
                   "top-3 share " + mid + " " + num(m) + ", " + tgt + " " + num(t) + ", " + fin + " " + num(f)});
  } else {
    not_run(8, "Decoder helix location", "pca/pca.json with " + mid + ", " + tgt + " and " + fin);
  }

  if (const json* c = a.get("cluster", "cluster.json")) {
    const json& pre = (*c)["probes"][(*c)["roles"]["pre_encoder"].get<std::string>()];
    const json& post = (*c)["probes"][(*c)["roles"]["post_encoder"].get<std::string>()];
    const double ari0 = pre["stage1"]["ari"], ari1 = post["stage1"]["ari"];
    const double sil0 = pre["stage1"]["silhouette"], sil1 = post["stage1"]["silhouette"];
    const double p0 = pre["stage2"]["purity"], p1 = post["stage2"]["purity"];
    const bool ok = ari1 > ari0 && sil1 > sil0 && p1 >= 0.7 && p0 <= p1 - 0.15;
    out.push_back({9, "PoS clustering", pass_fail(ok),
                   "ARI " + num(ari0) + " -> " + num(ari1) + ", silhouette " + num(sil0) + " -> " + num(sil1) +
                       ", stage-2 purity " + num(p0) + " -> " + num(p1)});
    const double ratio = (*c)["range_ratio"];
    out.push_back({10, "Range compression", pass_fail(ratio > 2.0), "coordinate-range ratio " + num(ratio) + " (limit 2)"});
  } else {
    not_run(9, "PoS clustering", "cluster/cluster.json");
    not_run(10, "Range compression", "cluster/cluster.json");
  }

  if (const json* d = a.get("digram", "digram.json")) {
    const double s = (*d)["single_purity"], g = (*d)["digram_purity"];
    out.push_back({11, "Di-gram effect", pass_fail(g >= s + 0.05),
                   "next-token tag purity single " + num(s) + ", di-gram " + num(g) + " at " +
                       (*d)["probe"].get<std::string>()});
  } else {
    not_run(11, "Di-gram effect", "digram/digram.json");
  }

  check(12, "Oracle equivalences", check_oracle_equivalences());

  const auto blobs = check_tsne_two_blobs();
  bool tsne_ok = blobs.pass;
  std::string detail = "two blobs: " + blobs.detail;
  if (const json* t = a.get("tsne", "tsne.json")) {
    for (const auto& [name, r] : (*t)["runs"].items()) {
      const double i = r["initial_kl"], f = r["final_kl"];
      tsne_ok = tsne_ok && f < i;
      detail += "; " + name + " KL " + num(i) + " -> " + num(f);
    }
  } else {
    detail += "; no probe runs";
  }
  out.push_back({13, "t-SNE sanity", pass_fail(tsne_ok), detail});
  return out;
}

void cmd_report(const Context& ctx) {
  Stage stage(ctx, "report");
  Artifacts a(ctx.root);
  const auto criteria = acceptance(ctx.config, a);

  json report{{"artifact", "report"}, {"experiment", ctx.config.experiment}, {"config_hash", ctx.hash}};
  if (const json* pca = a.get("pca", "pca.json")) {
    json ev = json::object();
    ev["raw_pe"] = (*pca)["raw_pe"]["explained_variance_ratio"];
    for (const auto& [name, p] : (*pca)["probes"].items())
      if (!p.contains("skipped")) ev[name] = p["explained_variance_ratio"];
    report["explained_variance"] = ev;
  }
  if (const json* h = a.get("helix", "helix.json")) report["helix"] = (*h)["fits"];
  if (const json* c = a.get("cluster", "cluster.json")) {
    json sc = json::object();
    for (const auto& [name, p] : (*c)["probes"].items())
      sc[name] = {{"ari", p["stage1"]["ari"]},
                  {"purity", p["stage1"]["purity"]},
                  {"silhouette", p["stage1"]["silhouette"]},
                  {"stage2_purity", p["stage2"]["purity"]},
                  {"elbow_k", p["elbow"]["suggested_k"]}};
    report["clustering"] = sc;
    report["range_compression"] = (*c)["range_ratio"];
  }
  if (const json* d = a.get("digram", "digram.json")) report["digram"] = *d;
  if (const json* c = a.get("collide", "collide.json")) report["collision"] = *c;
  if (const json* c = a.get("compare-combiners", "compare.json")) {
    report["combiners"] = {{"strategies", (*c)["strategies"]}, {"sweep", (*c)["sweep"]},
                           {"sweep_optimum", (*c)["sweep_optimum"]}};
  }
  if (const json* t = a.get("train", "training.json")) {
    json tr = *t;
    tr.erase("history");
    report["training"] = tr;
  }
  a.get("gen-corpus", "corpus.json");
  a.get("tsne", "tsne.json");
  a.get("collide", "collide.json");

  for (const auto& p : a.present()) stage.external_input(p);

  json table = json::array();
  for (const auto& c : criteria)
    table.push_back({{"id", c.id}, {"name", c.name}, {"status", c.status}, {"detail", c.detail}});
  report["acceptance"] = table;
  report["missing"] = a.missing();
  report["stages"] = json::object();
  for (const auto& s : kSubcommands) {
    if (s == "report" || s == "export") continue;
    report["stages"][s] = fs::exists(ctx.root / s / "manifest.json") ? "run" : "not run";
  }
  stage.write_json("report.json", report);

  std::ostringstream txt;
  txt << "experiment " << ctx.config.experiment << " (config " << ctx.hash << ")\n\n";
  txt << "stages\n";
  for (const auto& [s, st] : report["stages"].items()) txt << "  " << s << ": " << st.get<std::string>() << "\n";
  txt << "\nacceptance\n";
  for (const auto& c : criteria) {
    char head[96];
    std::snprintf(head, sizeof head, "  %2d  %-40s %-12s ", c.id, c.name.c_str(), c.status.c_str());
    txt << head << c.detail << "\n";
  }
  if (!a.missing().empty()) {
    txt << "\nmissing inputs\n";
    for (const auto& m : a.missing()) txt << "  " << m << "\n";
  }
  stage.write("summary.txt", txt.str());
  ctx.log << txt.str();
  stage.finish();
}

// ---------------------------------------------------------------- export

struct ExportOptions {
  std::string artifact;
  std::string kind;
  std::string probe;
};

void export_pca(const json& pca, const ExportOptions& o, std::ostream& out) {
  const std::string probe = o.probe.empty() ? "raw_pe" : o.probe;
  const json* entry = probe == "raw_pe" ? &pca["raw_pe"] : nullptr;
  if (!entry && pca["probes"].contains(probe)) entry = &pca["probes"][probe];
  if (!entry || entry->contains("skipped")) throw ValidationError("pca artifact has no coordinates for '" + probe + "'");
  if (o.kind == "variance-bars") {
    out << "component,ratio,cumulative\n";
    double cum = 0.0;
    const auto ratios = (*entry)["explained_variance_ratio"].get<std::vector<double>>();
    for (std::size_t i = 0; i < ratios.size(); ++i) {
      cum += ratios[i];
      out << i + 1 << ',' << ratios[i] << ',' << cum << '\n';
    }
    return;
  }
  const std::size_t dims = o.kind == "pca2d" ? 2 : 3;
  const Matrix c = matrix_from_json((*entry)["coords"]);
  if (c.cols() < dims) throw ValidationError("'" + probe + "' has fewer than " + std::to_string(dims) + " components");
  out << "pos";
  for (std::size_t k = 0; k < dims; ++k) out << ",c" << k + 1;
  out << '\n';
  for (std::size_t i = 0; i < c.rows(); ++i) {
    out << i;
    for (std::size_t k = 0; k < dims; ++k) out << ',' << c(i, k);
    out << '\n';
  }
}

void export_points(const Context& ctx, const json& artifact, const fs::path& dir, const ExportOptions& o,
                   std::ostream& out) {
  const bool tsne = o.kind == "tsne-scatter";
  std::string probe = o.probe;
  if (probe.empty()) probe = tsne ? ctx.config.encoder_output().name() : artifact["roles"]["post_encoder"].get<std::string>();
  std::map<std::string, Matrix> tensors;
  for (auto& t : model::load_tensors(dir / "points.hlxp")) tensors[t.name] = std::move(t.value);
  const std::string coords_name = probe + (tsne ? ".embedding" : ".reduced");
  if (!tensors.count(coords_name)) throw ValidationError("artifact has no points for probe '" + probe + "'");
  const Matrix& meta = tensors.at(probe + ".meta");
  const Matrix& coords = tensors.at(coords_name);
  const auto splits = prepare_corpus(ctx.config);
  analysis::PointMeta pm;
  for (std::size_t i = 0; i < meta.rows(); ++i) {
    pm.sentence.push_back(static_cast<std::size_t>(meta(i, 0)));
    pm.position.push_back(static_cast<std::size_t>(meta(i, 1)));
    pm.token.push_back(static_cast<corpus::TokenId>(meta(i, 2)));
    if (splits.corpus.tagged) pm.tag.push_back(static_cast<corpus::PosTag>(static_cast<int>(meta(i, 3))));
    if (!tsne) pm.cluster.push_back(static_cast<std::size_t>(meta(i, 4)));
  }
  pm.vocab = &vocab_for(splits, ProbePoint::parse(probe));
  analysis::write_points_csv(out, coords, pm);
}

void export_losses(const json& artifact, std::ostream& out) {
  out << kLossHeader;
  if (artifact["artifact"] == "training") {
    write_history_rows(out, artifact["combiner"].get<std::string>(), artifact["seed"].get<std::uint64_t>(),
                       artifact["history"]);
  } else {
    for (const auto& r : artifact["runs"])
      write_history_rows(out, r["strategy"].get<std::string>(), r["seed"].get<std::uint64_t>(), r["history"]);
  }
}

void cmd_export(const Context& ctx, const ExportOptions& o) {
  Stage stage(ctx, "export");
  const fs::path path = o.artifact;
  if (!fs::exists(path)) throw ValidationError("artifact '" + path.string() + "' does not exist");
  stage.external_input(path);
  json artifact;
  try {
    artifact = json::parse(read_file(path));
  } catch (const json::exception&) {
    throw ValidationError("artifact '" + path.string() + "' is not a JSON analysis artifact");
  }
  const std::string type = artifact.value("artifact", "");
  const std::map<std::string, std::set<std::string>> accepts{{"pca2d", {"pca"}},
                                                             {"pca3d", {"pca"}},
                                                             {"variance-bars", {"pca"}},
                                                             {"cluster-scatter", {"cluster"}},
                                                             {"tsne-scatter", {"tsne"}},
                                                             {"loss-curves", {"training", "compare"}}};
  if (!accepts.at(o.kind).count(type))
    throw ValidationError("kind '" + o.kind + "' cannot be exported from a '" + (type.empty() ? "unknown" : type) +
                          "' artifact");
  auto out = csv_stream();
  if (type == "pca") {
    export_pca(artifact, o, out);
  } else if (type == "cluster" || type == "tsne") {
    export_points(ctx, artifact, path.parent_path(), o, out);
  } else {
    export_losses(artifact, out);
  }
  const std::string label = o.probe.empty() ? "" : "_" + o.probe;
  stage.write(type + label + "_" + o.kind + ".csv", out.str());
  stage.finish();
}

/// "--a.b=v" and "--a.b v" forms.
std::vector<std::string> collect_overrides(const std::vector<std::string>& extras) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& e = extras[i];
    if (e.rfind("--", 0) != 0 || e.size() < 3)
      throw ValidationError("unexpected argument '" + e + "'; overrides look like --section.key=value");
    std::string body = e.substr(2);
    if (body.find('=') == std::string::npos) {
      if (i + 1 >= extras.size()) throw ValidationError("override '" + e + "' has no value");
      body += "=" + extras[++i];
    }
    out.push_back(body);
  }
  return out;
}

}  // namespace

int run_command(int argc, const char* const* argv, std::ostream& log, std::ostream& err) {
  CLI::App app{"helixlab: positional-encoding interpretability pipelines"};
  app.require_subcommand(1, 1);
  std::string config_path;
  ExportOptions eo;
  const std::map<std::string, std::string> help{
      {"gen-corpus", "Write the train/validation/probe splits and vocabularies"},
      {"train", "Train the translation model"},
      {"probe", "Capture activations of the probe sentences"},
      {"distill", "Per-position mean profiles of every probe"},
      {"pca", "Explained variance and PCA coordinates of the profiles and the raw encoding"},
      {"helix", "Helix fits of the PCA paths"},
      {"cluster", "Part-of-speech clustering before and after the encoder"},
      {"digram", "Di-gram versus single-token clustering"},
      {"tsne", "t-SNE of single-delta vectors"},
      {"collide", "Collision audit of the source combiner"},
      {"compare-combiners", "Loss curves of the combiner strategies over several seeds"},
      {"report", "Consolidated report and acceptance table"},
      {"export", "CSV plot data from an analysis artifact"}};
  for (const auto& name : kSubcommands) {
    CLI::App* sc = app.add_subcommand(name, help.at(name));
    sc->add_option("-c,--config", config_path, "JSON run configuration")->required();
    sc->allow_extras();
    if (name == "export") {
      sc->add_option("--artifact", eo.artifact, "Analysis artifact (JSON)")->required();
      sc->add_option("--kind", eo.kind, "pca2d, pca3d, variance-bars, cluster-scatter, tsne-scatter or loss-curves")
          ->required();
      sc->add_option("--probe", eo.probe, "Probe name, or raw_pe for the PCA kinds");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, log, err) == 0 ? kExitOk : kExitValidation;
  }
  CLI::App* sc = app.get_subcommands().front();
  const std::string name = sc->get_name();
  try {
    if (name == "export" && std::find(kExportKinds.begin(), kExportKinds.end(), eo.kind) == kExportKinds.end())
      throw ValidationError("unknown export kind '" + eo.kind + "'");
    Context ctx{load_run_config(config_path, collect_overrides(sc->remaining())), {}, {}, log};
    ctx.hash = config_hash(ctx.config);
    ctx.root = ctx.config.output_dir / ctx.config.experiment;
    const std::map<std::string, std::function<void(const Context&)>> table{
        {"gen-corpus", cmd_gen_corpus}, {"train", cmd_train},       {"probe", cmd_probe},
        {"distill", cmd_distill},       {"pca", cmd_pca},           {"helix", cmd_helix},
        {"cluster", cmd_cluster},       {"digram", cmd_digram},     {"tsne", cmd_tsne},
        {"collide", cmd_collide},       {"compare-combiners", cmd_compare}, {"report", cmd_report}};
    if (name == "export")
      cmd_export(ctx, eo);
    else
      table.at(name)(ctx);
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const corpus::TsvError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "failure in " << name << ": " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace helix::cli
