#include <cmath>

#include "doctest.h"
#include "helix/combiner/combiner.hpp"
#include "helix/numerics/ops.hpp"
#include "helix/numerics/rng.hpp"
#include "helix/verify/gradcheck.hpp"

using namespace helix::combiner;
namespace num = helix::numerics;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  num::Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("examples") {
  const Matrix p = random_matrix(5, 8, 1);
  const Matrix s = random_matrix(5, 8, 2);
  CHECK(combine(Matrix(5, 8), p, StraightAdd{}, false, 0) == p);
  const Matrix w = combine(s, p, WeightedSum{0.3}, false, 0);
  CHECK(num::max_abs_diff(w, num::add(num::scale(s, 0.3), p)) < 1e-15);
  LinearAdd identity{init_linear_add_weights(8, 0, 0.0, LinearInput::concat), 0.1, LinearInput::concat};
  CHECK(num::max_abs_diff(combine(s, p, identity, false, 0), combine(s, p, StraightAdd{}, false, 0)) < 1e-12);
}

TEST_CASE("WeightedSum with w = 1 equals StraightAdd exactly") {
  const Matrix p = random_matrix(4, 6, 3);
  const Matrix s = random_matrix(4, 6, 4);
  CHECK(combine(s, p, WeightedSum{1.0}, false, 0) == combine(s, p, StraightAdd{}, false, 0));
}

TEST_CASE("combine(S,P) - combine(0,P) is linear in S with dropout off") {
  const Matrix p = random_matrix(4, 6, 5);
  const Matrix s1 = random_matrix(4, 6, 6);
  const Matrix s2 = random_matrix(4, 6, 7);
  const std::vector<CombinerStrategy> strategies = {
      StraightAdd{}, WeightedSum{0.3}, init_linear_add(6, 11, 0.01),
      init_linear_add(6, 12, 0.3, LinearInput::semantic)};
  const double a = 1.7;
  const double b = -0.4;
  for (const auto& st : strategies) {
    auto f = [&](const Matrix& s) { return num::sub(combine(s, p, st, false, 0), combine(Matrix(4, 6), p, st, false, 0)); };
    const Matrix lhs = f(num::add(num::scale(s1, a), num::scale(s2, b)));
    const Matrix rhs = num::add(num::scale(f(s1), a), num::scale(f(s2), b));
    CHECK(num::max_abs_diff(lhs, rhs) < 1e-12);
  }
}

TEST_CASE("init_linear_add") {
  const auto a = std::get<LinearAdd>(init_linear_add(16, 42));
  const auto b = std::get<LinearAdd>(init_linear_add(16, 42));
  const auto c = std::get<LinearAdd>(init_linear_add(16, 43));
  CHECK(a.wc == b.wc);
  CHECK(a.wc != c.wc);
  CHECK(a.wc.rows() == 32);
  CHECK(a.wc.cols() == 16);
  const Matrix base = init_linear_add_weights(16, 0, 0.0, LinearInput::concat);
  CHECK(num::max_abs_diff(a.wc, base) <= 0.01);
  CHECK(num::max_abs_diff(c.wc, base) <= 0.01);
  const auto zero_noise = std::get<LinearAdd>(init_linear_add(16, 9, 0.0));
  const Matrix s = random_matrix(3, 16, 1);
  const Matrix p = random_matrix(3, 16, 2);
  CHECK(num::max_abs_diff(combine(s, p, zero_noise, false, 0), num::add(s, p)) < 1e-12);
  CHECK_THROWS(init_linear_add(1, 0));
}

TEST_CASE("validation") {
  const Matrix p(2, 4);
  CHECK_THROWS_AS(combine(Matrix(3, 4), p, StraightAdd{}, false, 0), num::ShapeError);
  CHECK_THROWS_AS(combine(p, p, WeightedSum{0.0}, false, 0), std::invalid_argument);
  CHECK_THROWS_AS(combine(p, p, LinearAdd{Matrix(4, 4), 0.1, LinearInput::concat}, false, 0),
                  num::ShapeError);
  CHECK_THROWS_AS(combine(p, p, LinearAdd{Matrix(8, 4), 1.0, LinearInput::concat}, false, 0),
                  std::invalid_argument);
}

TEST_CASE("LinearAdd dropout only touches the dense branch") {
  const Matrix s = random_matrix(6, 8, 1);
  const Matrix p = random_matrix(6, 8, 2);
  const auto la = init_linear_add(8, 3, 0.01, LinearInput::concat, 0.5);
  const Matrix y = combine(s, p, la, true, 77);
  const Matrix dense = num::matmul(num::concat_cols(s, p), std::get<LinearAdd>(la).wc);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double branch = y.values()[i] - p.values()[i];
    const bool dropped = std::abs(branch) < 1e-15;
    const bool kept = std::abs(branch - 2.0 * dense.values()[i]) < 1e-12;
    CHECK((dropped || kept));
  }
  CHECK(combine(s, p, la, true, 77) == y);
}

TEST_CASE("parse and print") {
  CHECK(parse_combiner("add").kind == CombinerKind::straight_add);
  const auto w = parse_combiner("weighted:0.3");
  CHECK(w.kind == CombinerKind::weighted_sum);
  CHECK(w.weight == 0.3);
  CHECK(to_string(w) == "weighted:0.3");
  CHECK(parse_combiner("linear-add:semantic").input == LinearInput::semantic);
  CHECK(to_string(parse_combiner("linear-add")) == "linear-add");
  CHECK_THROWS(parse_combiner("weighted:-1"));
  CHECK_THROWS(parse_combiner("concat"));
  CHECK_THROWS(parse_combiner("weighted:0.3x"));
}

TEST_CASE("differentiable combine matches the plain form and its gradients") {
  const Matrix s = random_matrix(4, 6, 8);
  const Matrix p = random_matrix(4, 6, 9);
  const Matrix wc = init_linear_add_weights(6, 1, 0.2, LinearInput::concat);
  for (const char* text : {"add", "weighted:0.3", "linear-add"}) {
    const CombinerConfig cfg = parse_combiner(text);
    num::Tape tape(false);
    const Var sv = tape.constant(s);
    const Var pv = tape.constant(p);
    const Var wv = tape.constant(wc);
    const Var out = combine(sv, pv, cfg, wv, 0.0, false, 0);
    CombinerStrategy st = StraightAdd{};
    if (cfg.kind == CombinerKind::weighted_sum) st = WeightedSum{cfg.weight};
    if (cfg.kind == CombinerKind::linear_add) st = LinearAdd{wc, 0.0, LinearInput::concat};
    CHECK(num::max_abs_diff(out.value(), combine(s, p, st, false, 0)) < 1e-12);

    const auto r = helix::verify::check_gradients(
        [&](num::Tape& t, std::span<const Var> v) {
          const Var y = combine(v[0], t.constant(p), cfg, v[1], 0.2, true, 5);
          return num::sum(num::matmul(y, t.constant(random_matrix(6, 1, 10))));
        },
        {s, wc});
    CHECK(r.max_relative_error < 1e-4);
  }
}
