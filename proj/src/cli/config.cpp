#include "helix/cli/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace helix::cli {

using nlohmann::json;

namespace {

/// Reads fields of one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw ValidationError("config " + (path_.empty() ? std::string("root") : path_) + ": " + message);
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    return it == object_.end() || it->is_null() ? nullptr : &*it;
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (const json* v = find(key)) {
      try {
        if constexpr (std::is_unsigned_v<T>) {
          if (!v->is_number_unsigned()) throw ValidationError("expected a non-negative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
          if (!v->is_number()) throw ValidationError("expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
          if (!v->is_string()) throw ValidationError("expected a string");
        }
        out = v->get<T>();
      } catch (const std::exception& e) {
        throw ValidationError("config " + key_path(key) + ": " + e.what());
      }
    }
  }

  void finish() const {
    for (const auto& [key, value] : object_.items())
      if (!seen_.contains(key)) throw ValidationError("config: unknown key '" + key_path(key) + "'");
  }

 private:
  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

combiner::CombinerConfig combiner_from(const std::string& text, const std::string& where) {
  try {
    return combiner::parse_combiner(text);
  } catch (const std::exception& e) {
    throw ValidationError("config " + where + ": " + e.what());
  }
}

model::ProbePoint probe_from(const std::string& text, const std::string& where) {
  try {
    return model::ProbePoint::parse(text);
  } catch (const std::exception& e) {
    throw ValidationError("config " + where + ": " + e.what());
  }
}

json model_json(const RunConfig& c) {
  const auto& m = c.model;
  return {{"scale", c.scale},         {"num_layers", m.num_layers},   {"d_model", m.d_model},
          {"num_heads", m.num_heads}, {"d_ff", m.d_ff},               {"dropout", m.dropout},
          {"max_len", m.max_len},     {"pe_base", m.pe_base},         {"embed_init", m.embed_init},
          {"linear_add_noise", m.linear_add_noise}, {"layer_norm_eps", m.layer_norm_eps}};
}

json to_json(const RunConfig& c) {
  json probes = json::array();
  for (const auto& p : c.probes) probes.push_back(p.name());
  json strategies = json::array();
  for (const auto& s : c.compare.strategies) strategies.push_back(combiner::to_string(s));
  const auto& a = c.analysis;
  const auto& g = c.corpus.grammar;
  return {
      {"experiment", c.experiment},
      {"seed", c.seed},
      {"model", model_json(c)},
      {"combiner", combiner::to_string(c.combiner)},
      {"corpus",
       {{"tsv", c.corpus.tsv.string()},
        {"train_pairs", c.corpus.train_pairs},
        {"validation_pairs", c.corpus.validation_pairs},
        {"probe_sentences", c.corpus.probe_sentences},
        {"grammar",
         {{"nouns", g.nouns}, {"verbs", g.verbs}, {"adjectives", g.adjectives}, {"adjuvants", g.adjuvants}, {"seed", g.seed}}}}},
      {"training",
       {{"epochs", c.training.epochs},
        {"batch_size", c.training.batch_size},
        {"warmup_steps", c.training.warmup_steps},
        {"fixed_lr", c.training.fixed_lr ? json(*c.training.fixed_lr) : json(nullptr)}}},
      {"probes", probes},
      {"analysis",
       {{"pca_k", a.pca_k},
        {"cluster_dims", a.cluster_dims},
        {"min_count", a.min_count},
        {"n_init", a.n_init},
        {"elbow_k_max", a.elbow_k_max},
        {"raw_pe_rows", a.raw_pe_rows},
        {"mid_attention", a.mid_attention.name()},
        {"post_attention", a.post_attention ? json(a.post_attention->name()) : json(nullptr)},
        {"collision_positions", a.collision_positions},
        {"threads", a.threads},
        {"tsne",
         {{"perplexity", a.tsne.perplexity},
          {"iterations", a.tsne.iterations},
          {"max_points", a.tsne.max_points},
          {"learning_rate", a.tsne.learning_rate}}}}},
      {"compare",
       {{"strategies", strategies},
        {"seeds", c.compare.seeds},
        {"sweep", c.compare.sweep},
        {"scale", c.compare.scale},
        {"threads", c.compare.threads}}},
      {"output_dir", c.output_dir.string()},
  };
}

void read_model(const json& j, RunConfig& c) {
  Fields f(j, "model");
  f.get("scale", c.scale);
  if (c.scale == "paper") {
    c.model = model::TransformerConfig::paper();
  } else if (c.scale == "desk") {
    c.model = model::TransformerConfig::desk();
  } else if (c.scale != "custom") {
    f.fail("scale must be paper, desk or custom, got '" + c.scale + "'");
  }
  auto& m = c.model;
  f.get("num_layers", m.num_layers);
  f.get("d_model", m.d_model);
  f.get("num_heads", m.num_heads);
  f.get("d_ff", m.d_ff);
  f.get("dropout", m.dropout);
  f.get("max_len", m.max_len);
  f.get("pe_base", m.pe_base);
  f.get("embed_init", m.embed_init);
  f.get("linear_add_noise", m.linear_add_noise);
  f.get("layer_norm_eps", m.layer_norm_eps);
  f.finish();
}

RunConfig from_json(const json& j) {
  RunConfig c;
  Fields root(j, "");
  root.get("experiment", c.experiment);
  if (!root.find("seed")) root.fail("seed is required");
  root.get("seed", c.seed);
  if (const json* m = root.find("model")) read_model(*m, c);
  std::string comb = combiner::to_string(c.combiner);
  root.get("combiner", comb);
  c.combiner = combiner_from(comb, "combiner");

  if (const json* cj = root.find("corpus")) {
    Fields f(*cj, "corpus");
    std::string tsv;
    f.get("tsv", tsv);
    c.corpus.tsv = tsv;
    f.get("train_pairs", c.corpus.train_pairs);
    f.get("validation_pairs", c.corpus.validation_pairs);
    f.get("probe_sentences", c.corpus.probe_sentences);
    if (const json* gj = f.find("grammar")) {
      Fields g(*gj, "corpus.grammar");
      g.get("nouns", c.corpus.grammar.nouns);
      g.get("verbs", c.corpus.grammar.verbs);
      g.get("adjectives", c.corpus.grammar.adjectives);
      g.get("adjuvants", c.corpus.grammar.adjuvants);
      g.get("seed", c.corpus.grammar.seed);
      g.finish();
    }
    f.finish();
  }

  if (const json* tj = root.find("training")) {
    Fields f(*tj, "training");
    f.get("epochs", c.training.epochs);
    f.get("batch_size", c.training.batch_size);
    f.get("warmup_steps", c.training.warmup_steps);
    double lr = 0.0;
    if (f.find("fixed_lr")) {
      f.get("fixed_lr", lr);
      c.training.fixed_lr = lr;
    }
    f.finish();
  }

  if (const json* pj = root.find("probes")) {
    if (pj->is_string() && pj->get<std::string>() == "all") {
      c.probes.clear();
    } else if (pj->is_array()) {
      for (const auto& p : *pj) {
        if (!p.is_string()) root.fail("probes must be probe names");
        c.probes.push_back(probe_from(p.get<std::string>(), "probes"));
      }
    } else {
      root.fail("probes must be \"all\" or a list of probe names");
    }
  }

  if (const json* aj = root.find("analysis")) {
    Fields f(*aj, "analysis");
    auto& a = c.analysis;
    f.get("pca_k", a.pca_k);
    f.get("cluster_dims", a.cluster_dims);
    f.get("min_count", a.min_count);
    f.get("n_init", a.n_init);
    f.get("elbow_k_max", a.elbow_k_max);
    f.get("raw_pe_rows", a.raw_pe_rows);
    std::string mid = a.mid_attention.name();
    f.get("mid_attention", mid);
    a.mid_attention = probe_from(mid, "analysis.mid_attention");
    if (f.find("post_attention")) {
      std::string post;
      f.get("post_attention", post);
      a.post_attention = probe_from(post, "analysis.post_attention");
    }
    f.get("collision_positions", a.collision_positions);
    f.get("threads", a.threads);
    if (const json* tj = f.find("tsne")) {
      Fields t(*tj, "analysis.tsne");
      t.get("perplexity", a.tsne.perplexity);
      t.get("iterations", a.tsne.iterations);
      t.get("max_points", a.tsne.max_points);
      t.get("learning_rate", a.tsne.learning_rate);
      t.finish();
    }
    f.finish();
  }

  if (const json* cj = root.find("compare")) {
    Fields f(*cj, "compare");
    if (const json* sj = f.find("strategies")) {
      if (!sj->is_array()) f.fail("strategies must be a list");
      c.compare.strategies.clear();
      for (const auto& s : *sj) {
        if (!s.is_string()) f.fail("strategies must be combiner names");
        c.compare.strategies.push_back(combiner_from(s.get<std::string>(), "compare.strategies"));
      }
    }
    f.get("seeds", c.compare.seeds);
    f.get("sweep", c.compare.sweep);
    f.get("scale", c.compare.scale);
    f.get("threads", c.compare.threads);
    f.finish();
  }

  std::string out = c.output_dir.string();
  root.get("output_dir", out);
  c.output_dir = out;
  root.finish();
  return c;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(what + ": invalid JSON: " + e.what());
  }
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValidationError("override '" + assignment + "' has an empty key segment");
    if (!node->is_object()) throw ValidationError("override '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

}  // namespace

model::ProbePoint RunConfig::post_attention() const {
  return analysis.post_attention ? *analysis.post_attention : model::decoder_out(model.num_layers);
}

model::ProbePoint RunConfig::encoder_output() const { return model::encoder_out(model.num_layers); }

std::vector<model::ProbePoint> RunConfig::probe_list() const {
  return probes.empty() ? model::all_probes(model.num_layers) : probes;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
  if (experiment.empty() || experiment.find_first_of("/\\") != std::string::npos || experiment == "." || experiment == "..")
    fail("experiment must be a plain non-empty name");
  model::TransformerConfig m = model;
  m.source_vocab = m.target_vocab = 5;
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (combiner.kind == combiner::CombinerKind::weighted_sum && !(combiner.weight > 0.0)) fail("combiner weight must be positive");
  if (!corpus.tsv.empty() && !std::filesystem::is_regular_file(corpus.tsv))
    fail("corpus.tsv '" + corpus.tsv.string() + "' does not exist");
  if (corpus.tsv.empty() && (corpus.grammar.nouns == 0 || corpus.grammar.verbs == 0 || corpus.grammar.adjectives == 0 ||
                             corpus.grammar.adjuvants == 0))
    fail("corpus.grammar word counts must be positive");
  if (corpus.train_pairs == 0) fail("corpus.train_pairs must be positive");
  if (corpus.validation_pairs == 0) fail("corpus.validation_pairs must be positive");
  if (corpus.probe_sentences == 0) fail("corpus.probe_sentences must be positive");
  if (training.batch_size == 0) fail("training.batch_size must be positive");
  if (training.warmup_steps == 0) fail("training.warmup_steps must be positive");
  if (training.fixed_lr && !(*training.fixed_lr > 0.0)) fail("training.fixed_lr must be positive");
  auto check_probe = [&](const model::ProbePoint& p, const std::string& where) {
    try {
      p.validate(model.num_layers);
    } catch (const std::invalid_argument& e) {
      fail(where + ": " + e.what());
    }
  };
  for (const auto& p : probes) check_probe(p, "probes");
  check_probe(analysis.mid_attention, "analysis.mid_attention");
  if (analysis.post_attention) check_probe(*analysis.post_attention, "analysis.post_attention");
  if (analysis.mid_attention.source_side()) fail("analysis.mid_attention must be a decoder probe");
  if (post_attention().source_side()) fail("analysis.post_attention must be a decoder probe");
  if (analysis.pca_k < 3) fail("analysis.pca_k must be at least 3");
  if (analysis.cluster_dims == 0) fail("analysis.cluster_dims must be positive");
  if (analysis.min_count == 0) fail("analysis.min_count must be positive");
  if (analysis.n_init == 0) fail("analysis.n_init must be positive");
  if (analysis.elbow_k_max < 3) fail("analysis.elbow_k_max must be at least 3");
  if (analysis.raw_pe_rows < 8) fail("analysis.raw_pe_rows must be at least 8");
  if (analysis.collision_positions == 0 || analysis.collision_positions > model.max_len)
    fail("analysis.collision_positions must lie in [1, model.max_len]");
  if (analysis.tsne.max_points < 3 || analysis.tsne.max_points > 5000) fail("analysis.tsne.max_points must lie in [3, 5000]");
  if (!(analysis.tsne.perplexity >= 5.0)) fail("analysis.tsne.perplexity must be at least 5");
  if (!(analysis.tsne.learning_rate > 0.0)) fail("analysis.tsne.learning_rate must be positive");
  if (compare.strategies.empty()) fail("compare.strategies must not be empty");
  if (compare.seeds == 0) fail("compare.seeds must be positive");
  for (double w : compare.sweep)
    if (!(w > 0.0)) fail("compare.sweep weights must be positive");
  if (compare.scale != "paper" && compare.scale != "desk" && compare.scale != "run")
    fail("compare.scale must be paper, desk or run");
  if (output_dir.empty()) fail("output_dir must not be empty");
}

std::string to_json_string(const RunConfig& config) { return to_json(config).dump(2); }

RunConfig parse_run_config(const std::string& json_text) { return from_json(parse_json(json_text, "config")); }

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config file '" + path.string() + "' cannot be read");
  std::stringstream buffer;
  buffer << in.rdbuf();
  json root = parse_json(buffer.str(), "config file '" + path.string() + "'");
  if (!root.is_object()) throw ValidationError("config file '" + path.string() + "' must hold a JSON object");
  for (const auto& o : overrides) apply_override(root, o);
  RunConfig config = from_json(root);
  if (const char* env = std::getenv("HELIX_OUT"); env && *env) config.output_dir = env;
  if (!config.corpus.tsv.empty() && config.corpus.tsv.is_relative())
    config.corpus.tsv = path.parent_path() / config.corpus.tsv;
  config.validate();
  return config;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& config) {
  RunConfig c = config;
  c.output_dir.clear();
  return fnv1a_hex(to_json(c).dump());
}

}  // namespace helix::cli
