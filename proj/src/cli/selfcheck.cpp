#include "helix/cli/selfcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

#include "helix/analysis/clustering.hpp"
#include "helix/analysis/pca.hpp"
#include "helix/analysis/tsne.hpp"
#include "helix/corpus/batching.hpp"
#include "helix/model/decode.hpp"
#include "helix/model/training.hpp"
#include "helix/numerics/ops.hpp"
#include "helix/numerics/rng.hpp"
#include "helix/posenc/positional_table.hpp"
#include "helix/verify/gradcheck.hpp"

namespace helix::cli {

namespace num = helix::numerics;
using num::Matrix;
using num::Tape;
using num::Var;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, num::Rng& rng, double s = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = s * rng.normal();
  return m;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

model::TransformerConfig tiny(std::size_t d, std::size_t layers, const char* combiner) {
  model::TransformerConfig c;
  c.num_layers = layers;
  c.d_model = d;
  c.num_heads = 2;
  c.d_ff = 2 * d;
  c.source_vocab = 11;
  c.target_vocab = 13;
  c.max_len = 16;
  c.dropout = 0.0;
  c.source_combiner = c.target_combiner = combiner::parse_combiner(combiner);
  return c;
}

corpus::TokenizedPair pair_of(std::size_t id, std::vector<model::TokenId> src, std::vector<model::TokenId> tgt) {
  corpus::TokenizedPair p;
  p.id = id;
  p.source = std::move(src);
  p.target = std::move(tgt);
  return p;
}

/// aᵀ·y·b with fixed random a, b, so every entry of y carries weight.
Var contract(Tape& t, Var y, std::uint64_t seed) {
  num::Rng rng(seed);
  const Matrix& v = y.value();
  const Var a = t.constant(random_matrix(1, v.rows(), rng));
  const Var b = t.constant(random_matrix(v.cols(), 1, rng));
  return num::sum(num::matmul(num::matmul(a, y), b));
}

/// Exhaustive minimum inertia over all splits into two nonempty groups.
double best_split(const Matrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
    if (mask & 1u) continue;
    double total = 0.0;
    for (std::size_t side = 0; side < 2; ++side) {
      std::vector<double> mean(d, 0.0);
      double count = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (((mask >> i) & 1u) == side) {
          count += 1.0;
          for (std::size_t c = 0; c < d; ++c) mean[c] += x(i, c);
        }
      for (std::size_t i = 0; i < n; ++i)
        if (((mask >> i) & 1u) == side)
          for (std::size_t c = 0; c < d; ++c) total += std::pow(x(i, c) - mean[c] / count, 2);
    }
    best = std::min(best, total);
  }
  return best;
}

/// Eigenvalues of a symmetric 3×3 matrix from its characteristic cubic, descending.
std::array<double, 3> cubic_eigenvalues(const Matrix& a) {
  const double q = (a(0, 0) + a(1, 1) + a(2, 2)) / 3.0;
  const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
  const double p2 = std::pow(a(0, 0) - q, 2) + std::pow(a(1, 1) - q, 2) + std::pow(a(2, 2) - q, 2) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  if (p == 0.0) return {q, q, q};
  Matrix b(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) b(i, j) = (a(i, j) - (i == j ? q : 0.0)) / p;
  const double det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0)) +
                     b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
  const double phi = std::acos(std::clamp(det / 2.0, -1.0, 1.0)) / 3.0;
  std::array<double, 3> e{q + 2.0 * p * std::cos(phi), 0.0, q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0)};
  e[1] = 3.0 * q - e[0] - e[2];
  std::sort(e.begin(), e.end(), std::greater<>());
  return e;
}

}  // namespace

CheckResult check_pe_identities(std::size_t d_model) {
  const posenc::PositionalTable table(249, d_model);
  double norm_err = 0.0;
  const double expect = std::sqrt(static_cast<double>(d_model) / 2.0);
  for (std::size_t p = 0; p < table.max_pos(); ++p) {
    double s = 0.0;
    for (double v : table.table().row(p)) s += v * v;
    norm_err = std::max(norm_err, std::abs(std::sqrt(s) - expect));
  }
  const double shift = posenc::shift_invariance_residual(table, 200, 49);
  CheckResult r;
  r.value = std::max(norm_err, shift);
  r.pass = r.value < 1e-9;
  r.detail = "row-norm error " + fmt(norm_err) + ", shift residual " + fmt(shift) + " (limit 1e-9)";
  return r;
}

CheckResult check_gradient_fidelity() {
  using Builder = std::function<Var(Tape&, std::span<const Var>)>;
  struct Case {
    const char* name;
    Builder loss;
    std::vector<Matrix> inputs;
  };
  num::Rng rng(2024);
  auto rm = [&](std::size_t r, std::size_t c) { return random_matrix(r, c, rng); };
  const std::vector<int> ids{3, 0, 4, 3, 1};
  const std::vector<int> targets{1, 0, 3, 2};
  const std::vector<double> weights{1.0, 0.0, 2.0, 0.5};
  Matrix gamma = rm(1, 4);
  for (double& g : gamma.values()) g += 2.0;
  Matrix relu_in = rm(3, 4);
  for (double& v : relu_in.values()) v += v > 0.0 ? 0.1 : -0.1;

  std::vector<Case> cases;
  cases.push_back({"matmul", [](Tape& t, std::span<const Var> in) { return contract(t, num::matmul(in[0], in[1]), 1); }, {rm(3, 4), rm(4, 2)}});
  cases.push_back({"add", [](Tape& t, std::span<const Var> in) { return contract(t, num::add(in[0], in[1]), 2); }, {rm(3, 4), rm(3, 4)}});
  cases.push_back({"sub", [](Tape& t, std::span<const Var> in) { return contract(t, num::sub(in[0], in[1]), 3); }, {rm(3, 4), rm(3, 4)}});
  cases.push_back({"scale", [](Tape& t, std::span<const Var> in) { return contract(t, num::scale(in[0], -1.7), 4); }, {rm(3, 4)}});
  cases.push_back({"transpose", [](Tape& t, std::span<const Var> in) { return contract(t, num::transpose(in[0]), 5); }, {rm(3, 4)}});
  cases.push_back({"concat_cols", [](Tape& t, std::span<const Var> in) { return contract(t, num::concat_cols(in[0], in[1]), 6); }, {rm(3, 2), rm(3, 3)}});
  cases.push_back({"add_bias", [](Tape& t, std::span<const Var> in) { return contract(t, num::add_bias(in[0], in[1]), 7); }, {rm(3, 4), rm(1, 4)}});
  cases.push_back({"relu", [](Tape& t, std::span<const Var> in) { return contract(t, num::relu(in[0]), 8); }, {relu_in}});
  cases.push_back({"softmax_rows", [](Tape& t, std::span<const Var> in) { return contract(t, num::softmax_rows(in[0]), 9); }, {rm(3, 4)}});
  cases.push_back({"layer_norm", [](Tape& t, std::span<const Var> in) { return contract(t, num::layer_norm(in[0], in[1], in[2], 1e-6), 10); }, {rm(3, 4), gamma, rm(1, 4)}});
  cases.push_back({"dropout", [](Tape& t, std::span<const Var> in) { return contract(t, num::dropout(in[0], 0.3, true, 99), 11); }, {rm(3, 4)}});
  cases.push_back({"gather_rows", [&ids](Tape& t, std::span<const Var> in) { return contract(t, num::gather_rows(in[0], ids), 12); }, {rm(5, 3)}});
  cases.push_back({"sum", [](Tape&, std::span<const Var> in) { return num::sum(in[0]); }, {rm(3, 4)}});
  cases.push_back({"cross_entropy", [&](Tape&, std::span<const Var> in) { return num::cross_entropy(in[0], targets, weights); }, {rm(4, 5)}});
  for (bool causal : {false, true}) {
    const model::AttentionLayout layout{2, 4, 4, {4, 2}, causal};
    cases.push_back({causal ? "attention (causal)" : "attention",
                     [layout](Tape& t, std::span<const Var> in) { return contract(t, model::attention(in[0], in[1], in[2], 2, layout), 13); },
                     {rm(8, 4), rm(8, 4), rm(8, 4)}});
  }

  CheckResult r;
  std::string worst;
  for (const auto& c : cases) {
    const auto g = verify::check_gradients(c.loss, c.inputs);
    if (g.max_relative_error >= r.value) {
      r.value = g.max_relative_error;
      worst = c.name;
    }
  }
  for (const char* comb : {"add", "weighted:0.3", "linear-add"}) {
    auto cfg = tiny(8, 1, comb);
    cfg.dropout = 0.1;
    model::TransformerModel m(cfg, 11);
    const auto p0 = pair_of(0, {2, 5, 6, 3}, {2, 7, 8, 9, 3});
    const auto p1 = pair_of(1, {2, 4, 5, 6, 7, 3}, {2, 10, 3});
    const auto batch = corpus::make_batch({&p0, &p1});
    const auto params = m.parameters();
    const auto g = verify::check_gradients_inplace(
        [&](Tape& t, std::span<const Var> vars) {
          model::ForwardPass fp(m, t, std::vector<Var>(vars.begin(), vars.end()), {true, 77, {}});
          return model::batch_loss(fp, batch).loss;
        },
        params);
    if (g.max_relative_error >= r.value) {
      r.value = g.max_relative_error;
      worst = std::string("tiny model (") + comb + ") " + m.name(g.worst_input);
    }
  }
  r.pass = r.value < 1e-4;
  r.detail = std::to_string(cases.size()) + " primitive cases and 3 tiny models; worst relative error " + fmt(r.value) +
             " at " + worst + " (limit 1e-4)";
  return r;
}

CheckResult check_model_invariants() {
  using model::TokenBlock;
  std::size_t causal_violations = 0;
  double pad_err = 0.0;
  std::size_t decode_mismatch = 0;

  const model::TransformerModel m(tiny(8, 2, "add"), 6);
  const std::vector<model::TokenId> src{2, 5, 6, 7, 3};
  const auto enc = model::encoder_forward(m, TokenBlock::single(src), false, 0).output;
  const std::vector<model::TokenId> tgt{2, 4, 5, 6, 7, 8};
  const auto base = model::decoder_forward(m, TokenBlock::single(tgt), enc, {5}, 5, false, 0);
  for (std::size_t j = 1; j < tgt.size(); ++j) {
    auto changed = tgt;
    changed[j] = 12;
    const auto alt = model::decoder_forward(m, TokenBlock::single(changed), enc, {5}, 5, false, 0);
    for (std::size_t i = 0; i < j; ++i) {
      const auto a = base.logits.row(i);
      const auto b = alt.logits.row(i);
      if (!std::equal(a.begin(), a.end(), b.begin())) ++causal_violations;
    }
  }

  for (const char* comb : {"add", "weighted:0.5", "linear-add"}) {
    const model::TransformerModel pm(tiny(8, 2, comb), 5);
    const auto e1 = model::encoder_forward(pm, TokenBlock::single(src), false, 0);
    const auto d1 = model::decoder_forward(pm, TokenBlock::single(tgt), e1.output, {src.size()}, src.size(), false, 0);
    for (std::size_t pad = 1; pad <= 4; ++pad) {
      auto ps = src;
      auto pt = tgt;
      ps.insert(ps.end(), pad, corpus::kPad);
      pt.insert(pt.end(), pad, corpus::kPad);
      TokenBlock sb = TokenBlock::single(ps);
      sb.lengths = {src.size()};
      TokenBlock tb = TokenBlock::single(pt);
      tb.lengths = {tgt.size()};
      const auto e2 = model::encoder_forward(pm, sb, false, 0);
      const auto d2 = model::decoder_forward(pm, tb, e2.output, {src.size()}, ps.size(), false, 0);
      pad_err = std::max(pad_err, num::max_abs_diff(num::slice_rows(e2.output, 0, src.size()), e1.output));
      pad_err = std::max(pad_err, num::max_abs_diff(num::slice_rows(d2.logits, 0, tgt.size()), d1.logits));
    }
  }

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto c = tiny(16, 2, seed % 2 ? "linear-add" : "weighted:0.3");
    c.num_heads = 4;
    const model::TransformerModel dm(c, seed);
    const std::vector<model::TokenId> s{2, 4, 5, 6, 7, 8, 3};
    if (model::greedy_decode(dm, s, 12, model::DecodeMode::incremental) != model::greedy_decode(dm, s, 12, model::DecodeMode::full))
      ++decode_mismatch;
  }

  CheckResult r;
  r.value = pad_err;
  r.pass = causal_violations == 0 && pad_err < 1e-9 && decode_mismatch == 0;
  r.detail = std::to_string(causal_violations) + " causality violations, padding error " + fmt(pad_err) +
             " (limit 1e-9), " + std::to_string(decode_mismatch) + " of 5 decodes differ";
  return r;
}

CheckResult check_oracle_equivalences(std::uint64_t seed) {
  num::Rng rng(seed);
  std::size_t kmeans_fail = 0;
  double pca_err = 0.0;
  for (std::size_t inst = 0; inst < 100; ++inst) {
    const std::size_t n = 3 + static_cast<std::size_t>(rng.below(6));
    const Matrix x = random_matrix(n, 2, rng);
    const auto model = analysis::kmeans_pp(x, 2, {inst, 10, 300, 1});
    const double best = best_split(x);
    if (model.inertia > best + 1e-9 * std::max(1.0, best)) ++kmeans_fail;

    Matrix y = random_matrix(12, 3, rng);
    for (std::size_t i = 0; i < y.rows(); ++i) y(i, 1) += 0.5 * y(i, 0);
    const auto pca = analysis::pca_fit(y, 3);
    Matrix cov(3, 3);
    std::array<double, 3> mean{};
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t c = 0; c < 3; ++c) mean[c] += y(i, c) / static_cast<double>(y.rows());
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < y.rows(); ++i) s += (y(i, a) - mean[a]) * (y(i, b) - mean[b]);
        cov(a, b) = s / static_cast<double>(y.rows() - 1);
      }
    const auto e = cubic_eigenvalues(cov);
    for (std::size_t c = 0; c < 3; ++c) pca_err = std::max(pca_err, std::abs(pca.explained_variance[c] - e[c]));
  }
  CheckResult r;
  r.value = pca_err;
  r.pass = kmeans_fail == 0 && pca_err < 1e-8;
  r.detail = std::to_string(kmeans_fail) + " of 100 K-Means++ runs above the exhaustive optimum; PCA eigenvalue error " +
             fmt(pca_err) + " (limit 1e-8)";
  return r;
}

CheckResult check_tsne_two_blobs(std::uint64_t seed) {
  num::Rng rng(seed);
  const std::size_t per = 50, dim = 10;
  Matrix x(2 * per, dim);
  for (std::size_t i = 0; i < 2 * per; ++i)
    for (std::size_t c = 0; c < dim; ++c) x(i, c) = rng.normal() + (i >= per && c == 0 ? 20.0 : 0.0);
  analysis::TsneOptions opts;
  opts.perplexity = 10.0;
  opts.seed = seed;
  const auto res = analysis::tsne(x, opts);
  const Matrix& y = res.embedding;
  double centre[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < 2 * per; ++i)
    for (std::size_t c = 0; c < 2; ++c) centre[i / per][c] += y(i, c) / static_cast<double>(per);
  double spread = 0.0;
  for (std::size_t i = 0; i < 2 * per; ++i)
    spread += std::hypot(y(i, 0) - centre[i / per][0], y(i, 1) - centre[i / per][1]) / static_cast<double>(2 * per);
  const double gap = std::hypot(centre[0][0] - centre[1][0], centre[0][1] - centre[1][1]);
  CheckResult r;
  r.value = gap / spread;
  r.pass = res.final_kl() < res.initial_kl() && r.value > 3.0;
  r.detail = "KL " + fmt(res.initial_kl()) + " -> " + fmt(res.final_kl()) + ", blob distance / spread " + fmt(r.value) +
             " (limit 3)";
  return r;
}

}  // namespace helix::cli
