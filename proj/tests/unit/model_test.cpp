#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "helix/corpus/batching.hpp"
#include "helix/corpus/grammar.hpp"
#include "helix/model/checkpoint.hpp"
#include "helix/model/decode.hpp"
#include "helix/model/probe.hpp"
#include "helix/model/training.hpp"
#include "helix/numerics/ops.hpp"
#include "helix/numerics/rng.hpp"
#include "helix/verify/gradcheck.hpp"

using namespace helix::model;
namespace num = helix::numerics;
namespace corpus = helix::corpus;
using helix::combiner::parse_combiner;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double s = 1.0) {
  num::Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.values()) v = s * rng.normal();
  return m;
}

TransformerConfig tiny(std::size_t d = 8, std::size_t layers = 1, std::size_t heads = 2) {
  TransformerConfig c;
  c.num_layers = layers;
  c.d_model = d;
  c.num_heads = heads;
  c.d_ff = 2 * d;
  c.source_vocab = 11;
  c.target_vocab = 13;
  c.max_len = 16;
  c.dropout = 0.0;
  return c;
}

corpus::TokenizedPair make_pair(std::size_t id, std::vector<TokenId> src, std::vector<TokenId> tgt) {
  corpus::TokenizedPair p;
  p.id = id;
  p.source = std::move(src);
  p.target = std::move(tgt);
  return p;
}

/// Direct evaluation of one softmax attention row.
std::vector<double> softmax(const std::vector<double>& s) {
  double m = s[0];
  for (double x : s) m = std::max(m, x);
  double z = 0.0;
  std::vector<double> out;
  for (double x : s) {
    out.push_back(std::exp(x - m));
    z += out.back();
  }
  for (double& x : out) x /= z;
  return out;
}

}  // namespace

TEST_CASE("attention_core examples") {
  SUBCASE("single key returns its value row") {
    const Matrix q = random_matrix(3, 4, 1);
    const Matrix k = random_matrix(1, 4, 2);
    const Matrix v = random_matrix(1, 5, 3);
    const Matrix out = attention_core(q, k, v, Matrix(3, 1));
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 5; ++c) CHECK(out(r, c) == doctest::Approx(v(0, c)).epsilon(1e-15));
  }
  SUBCASE("two identical keys average their values") {
    const Matrix q = random_matrix(2, 3, 4);
    const Matrix k1 = random_matrix(1, 3, 5);
    Matrix k(2, 3);
    for (std::size_t c = 0; c < 3; ++c) k(0, c) = k(1, c) = k1(0, c);
    const Matrix v = Matrix::from_rows({{1.0, 2.0}, {3.0, -6.0}});
    const Matrix out = attention_core(q, k, v, Matrix(2, 2));
    for (std::size_t r = 0; r < 2; ++r) {
      CHECK(std::abs(out(r, 0) - 2.0) < 1e-15);
      CHECK(std::abs(out(r, 1) + 2.0) < 1e-15);
    }
  }
  SUBCASE("orthonormal Q = K with d_k = 4") {
    const Matrix q = Matrix::identity(4);
    Matrix w;
    attention_core(q, q, Matrix::identity(4), Matrix(4, 4), &w);
    const double on = std::exp(0.5) / (std::exp(0.5) + 3.0);
    const double off = 1.0 / (std::exp(0.5) + 3.0);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(w(i, j) - (i == j ? on : off)) < 1e-15);
  }
}

TEST_CASE("attention_core rejects bad inputs") {
  const Matrix q = random_matrix(2, 4, 1);
  Matrix mask(2, 3);
  mask(1, 0) = mask(1, 1) = mask(1, 2) = kMaskValue;
  CHECK_THROWS_AS(attention_core(q, random_matrix(3, 4, 2), random_matrix(3, 2, 3), mask), std::invalid_argument);
  CHECK_THROWS_AS(attention_core(q, random_matrix(3, 5, 2), random_matrix(3, 2, 3), Matrix(2, 3)), num::ShapeError);
  CHECK_THROWS_AS(attention_core(q, random_matrix(3, 4, 2), random_matrix(2, 2, 3), Matrix(2, 3)), num::ShapeError);
  CHECK_THROWS_AS(attention_core(q, random_matrix(3, 4, 2), random_matrix(3, 2, 3), Matrix(3, 3)), num::ShapeError);
}

TEST_CASE("attention outputs are convex combinations of value rows") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix q = random_matrix(5, 4, seed, 3.0);
    const Matrix k = random_matrix(6, 4, seed + 100, 3.0);
    const Matrix v = random_matrix(6, 3, seed + 200);
    const Matrix mask = padding_mask(5, 6, 4, false);
    Matrix w;
    const Matrix out = attention_core(q, k, v, mask, &w);
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(w(i, j) >= 0.0);
        s += w(i, j);
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
      CHECK(w(i, 4) == 0.0);
      CHECK(w(i, 5) == 0.0);
    }
    CHECK(num::max_abs_diff(out, num::matmul(w, v)) < 1e-12);
  }
}

TEST_CASE("multi_head examples") {
  const Matrix x = random_matrix(3, 4, 7);
  const HeadProjection h0{random_matrix(4, 2, 8), random_matrix(4, 2, 9), random_matrix(4, 2, 10)};
  const Matrix mask = causal_mask(3);
  SUBCASE("identical heads replicate the single head") {
    const Matrix wo = random_matrix(4, 4, 11);
    const Matrix out = multi_head(x, x, x, {h0, h0}, wo, mask);
    const Matrix single = attention_core(num::matmul(x, h0.wq), num::matmul(x, h0.wk), num::matmul(x, h0.wv), mask);
    const Matrix folded = num::add(num::slice_rows(wo, 0, 2), num::slice_rows(wo, 2, 2));
    CHECK(num::max_abs_diff(out, num::matmul(single, folded)) < 1e-12);
  }
  SUBCASE("zero output projection gives zero shift") {
    const Matrix out = multi_head(x, x, x, {h0, h0}, Matrix(4, 4), mask);
    CHECK(num::frobenius_norm(out) == 0.0);
  }
  SUBCASE("two heads, d_model 4, step by step") {
    const Matrix in = Matrix::from_rows({{1, 0, 0, 1}, {0, 1, 1, 0}});
    HeadProjection a{Matrix::from_rows({{1, 0}, {0, 1}, {0, 0}, {0, 0}}), Matrix::from_rows({{1, 0}, {0, 1}, {0, 0}, {0, 0}}),
                     Matrix::from_rows({{1, 0}, {0, 1}, {0, 0}, {0, 0}})};
    HeadProjection b{Matrix::from_rows({{0, 0}, {0, 0}, {2, 0}, {0, 2}}), Matrix::from_rows({{0, 0}, {0, 0}, {1, 0}, {0, 1}}),
                     Matrix::from_rows({{0, 0}, {0, 0}, {1, 0}, {0, 1}})};
    const Matrix wo = Matrix::identity(4);
    const Matrix out = multi_head(in, in, in, {a, b}, wo, Matrix(2, 2));
    // Head a: q = k = v = first two columns; scores/sqrt(2).
    const double r2 = std::sqrt(2.0);
    const auto pa0 = softmax({1.0 / r2, 0.0});
    const auto pa1 = softmax({0.0, 1.0 / r2});
    // Head b: q = 2·(last two columns), k = v = last two columns.
    const auto pb0 = softmax({2.0 / r2, 0.0});
    const auto pb1 = softmax({0.0, 2.0 / r2});
    const Matrix expect = Matrix::from_rows({{pa0[0] * 1 + pa0[1] * 0, pa0[0] * 0 + pa0[1] * 1, pb0[0] * 0 + pb0[1] * 1, pb0[0] * 1 + pb0[1] * 0},
                                             {pa1[0] * 1 + pa1[1] * 0, pa1[0] * 0 + pa1[1] * 1, pb1[0] * 0 + pb1[1] * 1, pb1[0] * 1 + pb1[1] * 0}});
    CHECK(num::max_abs_diff(out, expect) < 1e-15);
  }
}

TEST_CASE("fused batched attention matches attention_core per batch row and head") {
  const std::size_t heads = 2;
  for (bool causal : {false, true}) {
    AttentionLayout layout{3, 5, causal ? 5u : 4u, {}, causal};
    layout.key_lengths = causal ? std::vector<std::size_t>{5, 3, 1} : std::vector<std::size_t>{4, 2, 1};
    const Matrix q = random_matrix(3 * 5, 6, 1);
    const Matrix k = random_matrix(3 * layout.k_len, 6, 2);
    const Matrix v = random_matrix(3 * layout.k_len, 6, 3);
    num::Tape tape(false);
    const Matrix out = attention(tape.constant(q), tape.constant(k), tape.constant(v), heads, layout).value();
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        const Matrix qb = num::slice_cols(num::slice_rows(q, b * 5, 5), h * 3, 3);
        const Matrix kb = num::slice_cols(num::slice_rows(k, b * layout.k_len, layout.k_len), h * 3, 3);
        const Matrix vb = num::slice_cols(num::slice_rows(v, b * layout.k_len, layout.k_len), h * 3, 3);
        const Matrix ref = attention_core(qb, kb, vb, layout.mask(b));
        CHECK(num::max_abs_diff(num::slice_cols(num::slice_rows(out, b * 5, 5), h * 3, 3), ref) < 1e-13);
      }
    }
  }
}

TEST_CASE("masked keys get exactly zero weight and zero gradient") {
  Matrix w;
  attention_core(random_matrix(3, 4, 1), random_matrix(5, 4, 2), random_matrix(5, 4, 3), padding_mask(3, 5, 2, false), &w);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 2; j < 5; ++j) CHECK(w(i, j) == 0.0);

  AttentionLayout layout{2, 3, 5, {5, 2}, false};
  num::Tape tape;
  const Var q = tape.variable(random_matrix(6, 4, 4));
  const Var k = tape.variable(random_matrix(10, 4, 5));
  const Var v = tape.variable(random_matrix(10, 4, 6));
  tape.backward(num::sum(num::matmul(attention(q, k, v, 2, layout), tape.constant(random_matrix(4, 1, 7)))));
  for (std::size_t r = 7; r < 10; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(tape.gradient(k)(r, c) == 0.0);
      CHECK(tape.gradient(v)(r, c) == 0.0);
    }
}

TEST_CASE("fused attention gradients") {
  for (bool causal : {false, true}) {
    AttentionLayout layout{2, 4, 4, {4, 2}, causal};
    const auto r = helix::verify::check_gradients(
        [&](num::Tape& t, std::span<const Var> in) {
          const Var o = attention(in[0], in[1], in[2], 2, layout);
          return num::sum(num::matmul(num::matmul(t.constant(random_matrix(2, 8, 4)), o), t.constant(random_matrix(4, 3, 5))));
        },
        {random_matrix(8, 4, 1), random_matrix(8, 4, 2), random_matrix(8, 4, 3)});
    CHECK(r.max_relative_error < 1e-6);
  }
}

TEST_CASE("model parameters") {
  TransformerConfig c = tiny(8, 2, 2);
  c.source_combiner = parse_combiner("linear-add");
  const TransformerModel m(c, 1);
  CHECK(m.find("src.combiner.wc").has_value());
  CHECK_FALSE(m.find("tgt.combiner.wc").has_value());
  CHECK(m.param("enc.1.self.wq").rows() == 8);
  CHECK(m.param("dec.0.cross.wv").cols() == 8);
  CHECK(m.param("out.w").cols() == 13);
  CHECK(m.param("src.combiner.wc").rows() == 16);
  CHECK_THROWS_AS(m.param("enc.2.self.wq"), std::out_of_range);
  const TransformerModel m2(c, 1);
  for (std::size_t i = 0; i < m.num_parameters(); ++i) CHECK(m.value(i) == m2.value(i));
  TransformerConfig bad = c;
  bad.num_heads = 3;
  CHECK_THROWS_AS(TransformerModel(bad, 1), std::invalid_argument);
}

TEST_CASE("probe point names") {
  for (const auto& p : all_probes(4)) CHECK(ProbePoint::parse(p.name()) == p);
  CHECK(encoder_out(2).name() == "encoder_layer_2_out");
  CHECK(ProbePoint::parse("decoder_layer_2_cross") == decoder_cross(2));
  CHECK_THROWS(ProbePoint::parse("decoder_layer_x_cross"));
  CHECK_THROWS(ProbePoint::parse("decoder_layer_0_cross"));
  CHECK_THROWS(decoder_self(5).validate(4));
  CHECK(all_probes(4).size() == 2 + 4 + 2 + 12 + 1);
}

TEST_CASE("encoder forward") {
  const TransformerModel m(tiny(8, 2, 2), 3);
  const std::vector<TokenId> ids{2, 5, 6, 7, 3};
  const auto a = encoder_forward(m, TokenBlock::single(ids), false, 0);
  const auto b = encoder_forward(m, TokenBlock::single(ids), false, 0, {encoder_out(1)});
  CHECK(a.captures.empty());
  CHECK(a.output == b.output);
  CHECK(b.captures.size() == 1);
  CHECK_THROWS_AS(encoder_forward(m, TokenBlock::single(std::vector<TokenId>{2, 11, 3}), false, 0), std::out_of_range);
  CHECK_THROWS_AS(encoder_forward(m, TokenBlock::single(std::vector<TokenId>(17, 4)), false, 0), std::invalid_argument);

  TransformerConfig dc = tiny(8, 2, 2);
  dc.dropout = 0.3;
  const TransformerModel md(dc, 3);
  const auto t1 = encoder_forward(md, TokenBlock::single(ids), true, 9);
  const auto t2 = encoder_forward(md, TokenBlock::single(ids), true, 9);
  const auto t3 = encoder_forward(md, TokenBlock::single(ids), true, 10);
  CHECK(t1.output == t2.output);
  CHECK(t1.output != t3.output);
}

TEST_CASE("padding never changes non-pad outputs") {
  TransformerConfig c = tiny(8, 2, 2);
  c.source_combiner = parse_combiner("linear-add");
  c.target_combiner = parse_combiner("weighted:0.5");
  const TransformerModel m(c, 5);
  const std::vector<TokenId> src{2, 5, 6, 3};
  const std::vector<TokenId> tgt{2, 8, 9, 10};
  const auto e1 = encoder_forward(m, TokenBlock::single(src), false, 0);
  const auto d1 = decoder_forward(m, TokenBlock::single(tgt), e1.output, {4}, 4, false, 0);

  for (std::size_t pad = 1; pad <= 5; ++pad) {
    auto ps = src;
    auto pt = tgt;
    ps.insert(ps.end(), pad, corpus::kPad);
    pt.insert(pt.end(), pad, corpus::kPad);
    TokenBlock sb = TokenBlock::single(ps);
    sb.lengths = {src.size()};
    TokenBlock tb = TokenBlock::single(pt);
    tb.lengths = {tgt.size()};
    const auto e2 = encoder_forward(m, sb, false, 0);
    const auto d2 = decoder_forward(m, tb, e2.output, {src.size()}, ps.size(), false, 0);
    CHECK(num::max_abs_diff(num::slice_rows(e2.output, 0, src.size()), e1.output) < 1e-9);
    CHECK(num::max_abs_diff(num::slice_rows(d2.logits, 0, tgt.size()), d1.logits) < 1e-9);
  }

  // Same pair inside a batch next to a longer pair.
  corpus::TokenizedPair p0 = make_pair(0, src, {2, 8, 9, 10, 3});
  corpus::TokenizedPair p1 = make_pair(1, {2, 4, 5, 6, 7, 8, 9, 3}, {2, 4, 5, 6, 7, 8, 9, 10, 3});
  const auto batch = corpus::make_batch({&p0, &p1});
  num::Tape tape(false);
  ForwardPass fp(m, tape, {});
  const auto loss = batch_loss(fp, batch);
  CHECK(num::max_abs_diff(num::slice_rows(loss.logits.value(), 0, 4), d1.logits) < 1e-9);
}

TEST_CASE("decoder causality is exact") {
  const TransformerModel m(tiny(8, 2, 2), 6);
  const std::vector<TokenId> src{2, 5, 6, 7, 3};
  const auto enc = encoder_forward(m, TokenBlock::single(src), false, 0).output;
  const std::vector<TokenId> tgt{2, 4, 5, 6, 7, 8};
  const auto probes = all_probes(2);
  const auto base = decoder_forward(m, TokenBlock::single(tgt), enc, {5}, 5, false, 0, probes);
  for (std::size_t j = 1; j < tgt.size(); ++j) {
    auto changed = tgt;
    changed[j] = 12;
    const auto alt = decoder_forward(m, TokenBlock::single(changed), enc, {5}, 5, false, 0, probes);
    for (std::size_t i = 0; i < j; ++i) {
      const auto a = base.logits.row(i);
      const auto b = alt.logits.row(i);
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
    bool differs = false;
    const auto a = base.logits.row(j);
    const auto b = alt.logits.row(j);
    for (std::size_t c = 0; c < a.size(); ++c) differs = differs || a[c] != b[c];
    CHECK(differs);
  }
}

TEST_CASE("position 0 self-attends only to itself") {
  const TransformerModel m(tiny(8, 1, 2), 7);
  const auto probes = std::vector<ProbePoint>{{ProbeKind::tgt_combined, 0}};
  const std::vector<TokenId> tgt{2, 4, 5, 6};
  const Matrix enc = random_matrix(3, 8, 1);
  const auto d = decoder_forward(m, TokenBlock::single(tgt), enc, {3}, 3, false, 0, probes);
  const Matrix& y = d.captures.at(probes[0]);
  const auto& a = m.index().decoder[0].self;
  num::Tape tape(false);
  const Var q = tape.constant(num::matmul(y, m.value(a.wq)));
  const Var k = tape.constant(num::matmul(y, m.value(a.wk)));
  const Matrix v = num::matmul(y, m.value(a.wv));
  const Matrix out = attention(q, k, tape.constant(v), 2, {1, 4, 4, {4}, true}).value();
  for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(out(0, c) - v(0, c)) < 1e-15);
  // Reference per-head form agrees.
  const auto heads = m.heads(a);
  const Matrix ref = multi_head(y, y, y, heads, m.value(a.wo), causal_mask(4));
  CHECK(num::max_abs_diff(num::matmul(out, m.value(a.wo)), ref) < 1e-12);
}

TEST_CASE("zero encoder output gives zero cross-attention shift") {
  const TransformerModel m(tiny(8, 1, 2), 8);
  const std::vector<ProbePoint> probes{decoder_self(1), decoder_cross(1)};
  const auto d = decoder_forward(m, TokenBlock::single(std::vector<TokenId>{2, 4, 5}), Matrix(4, 8), {4}, 4, false, 0, probes);
  const auto& ln = m.index().decoder[0].ln2;
  const Matrix expect = num::layer_norm(d.captures.at(probes[0]), m.value(ln.gamma), m.value(ln.beta), m.config().layer_norm_eps);
  CHECK(num::max_abs_diff(d.captures.at(probes[1]), expect) < 1e-15);
}

TEST_CASE("full tiny model passes the finite-difference check") {
  for (const char* comb : {"add", "weighted:0.3", "linear-add"}) {
    CAPTURE(comb);
    TransformerConfig c = tiny(8, 1, 2);
    c.source_combiner = parse_combiner(comb);
    c.target_combiner = parse_combiner(comb);
    c.dropout = 0.1;
    TransformerModel m(c, 11);
    corpus::TokenizedPair p0 = make_pair(0, {2, 5, 6, 3}, {2, 7, 8, 9, 3});
    corpus::TokenizedPair p1 = make_pair(1, {2, 4, 5, 6, 7, 3}, {2, 10, 3});
    const auto batch = corpus::make_batch({&p0, &p1});
    const auto params = m.parameters();
    const auto r = helix::verify::check_gradients_inplace(
        [&](num::Tape& t, std::span<const Var> vars) {
          ForwardPass fp(m, t, std::vector<Var>(vars.begin(), vars.end()), {true, 77, {}});
          return batch_loss(fp, batch).loss;
        },
        params);
    CAPTURE(m.name(r.worst_input));
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("training steps") {
  TransformerConfig c = tiny(16, 1, 2);
  c.dropout = 0.1;
  TransformerModel m(c, 12);
  auto adam = make_optimizer(m, {.fixed_lr = 1e-3});

  SUBCASE("all-pad batch changes nothing") {
    corpus::TokenizedPair p = make_pair(0, {2, 5, 3}, {2, 7, 3});
    auto batch = corpus::make_batch({&p});
    std::fill(batch.target_out.begin(), batch.target_out.end(), corpus::kPad);
    const auto before = m.value(0);
    const auto r = train_step(m, adam, batch, 1);
    CHECK(r.loss == 0.0);
    CHECK(r.tokens == 0);
    CHECK(adam.step() == 0);
    CHECK(m.value(0) == before);
  }
  SUBCASE("initial loss is near ln(vocab)") {
    const corpus::SyntheticGrammar g;
    TransformerConfig pc = TransformerConfig::desk();
    pc.source_vocab = g.source_vocab().size();
    pc.target_vocab = g.target_vocab().size();
    const TransformerModel pm(pc, 2);
    const auto data = corpus::generate_corpus(g, 64, 4);
    const auto metrics = evaluate(pm, corpus::make_batches(data.pairs, 32, 0));
    CHECK(std::abs(metrics.loss - std::log(static_cast<double>(pc.target_vocab))) < 0.1 * std::log(static_cast<double>(pc.target_vocab)));
  }
}

TEST_CASE("single pair memorisation") {
  TransformerConfig c = TransformerConfig::desk();
  c.d_model = 32;
  c.num_heads = 4;
  c.d_ff = 64;
  c.source_vocab = 20;
  c.target_vocab = 20;
  TransformerModel m(c, 13);
  auto adam = make_optimizer(m, {.fixed_lr = 1e-3});
  corpus::TokenizedPair p = make_pair(0, {2, 5, 9, 6, 14, 3}, {2, 7, 11, 8, 12, 16, 3});
  const auto batch = corpus::make_batch({&p});
  for (std::size_t s = 0; s < 200; ++s) train_step(m, adam, batch, s);
  const auto eval = evaluate(m, {batch});
  CHECK(eval.accuracy == 1.0);
  const auto out = greedy_decode(m, p.source, 20);
  CHECK(out == std::vector<TokenId>(p.target.begin() + 1, p.target.end()));
  CHECK(greedy_decode(m, p.source, 20, DecodeMode::full) == out);
}

TEST_CASE("incremental and full greedy decoding agree") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TransformerConfig c = tiny(16, 2, 4);
    c.target_combiner = parse_combiner(seed % 2 ? "linear-add" : "weighted:0.3");
    const TransformerModel m(c, seed);
    const std::vector<TokenId> src{2, 4, 5, 6, 7, 8, 3};
    const auto a = greedy_decode(m, src, 12, DecodeMode::incremental);
    const auto b = greedy_decode(m, src, 12, DecodeMode::full);
    CHECK(a == b);
    CHECK(greedy_decode(m, src, 12) == a);
    CHECK(a.size() <= 12);
  }
}

TEST_CASE("probe_run") {
  const corpus::SyntheticGrammar g;
  TransformerConfig c = TransformerConfig::desk();
  c.source_vocab = g.source_vocab().size();
  c.target_vocab = g.target_vocab().size();
  c.source_combiner = parse_combiner("weighted:0.3");
  const TransformerModel m(c, 21);
  const auto data = corpus::generate_corpus(g, 40, 3);

  const auto one = probe_run(m, {data.pairs[0]}, {encoder_out(2)});
  CHECK(one.at(encoder_out(2)).size() == data.pairs[0].source.size());

  const ProbePoint combined{ProbeKind::src_combined, 0};
  const auto d = probe_run(m, data.pairs, {combined}, 7);
  const auto& rec = d.at(combined);
  const Matrix& embed = m.param("src.embed");
  for (std::size_t i = 0; i < rec.size(); ++i) {
    Matrix s(1, c.d_model);
    for (std::size_t k = 0; k < c.d_model; ++k)
      s(0, k) = embed(static_cast<std::size_t>(rec.token[i]), k) * std::sqrt(static_cast<double>(c.d_model));
    const Matrix want = helix::combiner::combine(s, num::slice_rows(m.positions().table(), rec.position[i], 1),
                                                 combiner_strategy(m, true), false, 0);
    const auto row = rec.vectors.row(i);
    CHECK(std::equal(row.begin(), row.end(), want.values().begin()));
  }

  const auto probes = all_probes(c.num_layers);
  const auto all = probe_run(m, data.pairs, probes);
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;
  for (const auto& p : data.pairs) {
    src_len += p.source.size();
    tgt_len += p.target.size() - 1;
  }
  for (const auto& p : probes) CHECK(all.at(p).size() == (p.source_side() ? src_len : tgt_len));
  CHECK(all.tagged);
  const auto& dec = all.at(decoder_cross(2));
  CHECK(dec.vectors.cols() == c.d_model);
  CHECK(all.at({ProbeKind::final_logits, 0}).vectors.cols() == c.target_vocab);
  for (std::size_t i = 0; i < dec.size(); ++i) CHECK(dec.tag[i] == data.pairs[dec.sentence[i]].target_tags[dec.position[i]]);

  const auto path = std::filesystem::temp_directory_path() / "helix_dump_test.bin";
  save_dump(all, path);
  const auto back = load_dump(path);
  CHECK(back.tagged);
  for (const auto& p : probes) {
    CHECK(back.at(p).vectors == all.at(p).vectors);
    CHECK(back.at(p).token == all.at(p).token);
    CHECK(back.at(p).tag == all.at(p).tag);
    CHECK(back.at(p).position == all.at(p).position);
  }
}

TEST_CASE("checkpoint round trip and errors") {
  TransformerConfig c = tiny(8, 2, 2);
  c.source_combiner = parse_combiner("linear-add");
  TransformerModel m(c, 31);
  std::stringstream first;
  save_checkpoint(m, first);
  const std::string bytes = first.str();
  CHECK(bytes.substr(0, 4) == "HLXP");

  TransformerModel other(c, 32);
  std::stringstream in(bytes);
  load_checkpoint(other, in);
  for (std::size_t i = 0; i < m.num_parameters(); ++i) CHECK(other.value(i) == m.value(i));
  std::stringstream second;
  save_checkpoint(other, second);
  CHECK(second.str() == bytes);

  auto expect_error = [&](const std::string& data, TensorFileError::Kind kind, TransformerModel& target) {
    std::stringstream s(data);
    const auto before = target.value(0);
    try {
      load_checkpoint(target, s);
      FAIL("expected TensorFileError");
    } catch (const TensorFileError& e) {
      CHECK(e.kind() == kind);
    }
    CHECK(target.value(0) == before);
  };
  TransformerModel fresh(c, 33);
  std::string corrupt = bytes;
  corrupt[1] = 'X';
  expect_error(corrupt, TensorFileError::Kind::bad_magic, fresh);
  std::string version = bytes;
  version[4] = 9;
  expect_error(version, TensorFileError::Kind::bad_version, fresh);
  expect_error(bytes.substr(0, bytes.size() - 5), TensorFileError::Kind::truncated, fresh);
  expect_error(bytes.substr(0, 30), TensorFileError::Kind::truncated, fresh);

  TransformerConfig wider = c;
  wider.d_ff = 32;
  TransformerModel w(wider, 1);
  std::stringstream s(bytes);
  try {
    load_checkpoint(w, s);
    FAIL("expected shape mismatch");
  } catch (const TensorFileError& e) {
    CHECK(e.kind() == TensorFileError::Kind::shape_mismatch);
    CHECK(e.tensor() == "enc.0.ffn.w1");
    CHECK(std::string(e.what()).find("enc.0.ffn.w1") != std::string::npos);
  }
  TransformerConfig deeper = c;
  deeper.num_layers = 3;
  TransformerModel dm(deeper, 1);
  expect_error(bytes, TensorFileError::Kind::missing_tensor, dm);
  TransformerConfig shallow = c;
  shallow.num_layers = 1;
  TransformerModel sm(shallow, 1);
  expect_error(bytes, TensorFileError::Kind::unexpected_tensor, sm);

  const auto path = std::filesystem::temp_directory_path() / "helix_ckpt_test.bin";
  save_checkpoint(m, path);
  TransformerModel from_file(c, 40);
  load_checkpoint(from_file, path);
  CHECK(from_file.value(3) == m.value(3));
  CHECK_THROWS_AS(load_checkpoint(from_file, std::filesystem::path("/nonexistent/x.bin")), TensorFileError);
}
