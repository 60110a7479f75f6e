#include "helix/combiner/combiner.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

#include "helix/numerics/ops.hpp"
#include "helix/numerics/rng.hpp"

namespace helix::combiner {

namespace num = helix::numerics;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_weight(double w) {
  if (!(w > 0.0)) throw std::invalid_argument("WeightedSum: w must be positive");
}

void check_rate(double r) {
  if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("LinearAdd: dropout rate must be in [0,1)");
}

}  // namespace

CombinerConfig parse_combiner(std::string_view text) {
  CombinerConfig c;
  if (text == "add" || text == "straight-add") {
    c.kind = CombinerKind::straight_add;
  } else if (text.starts_with("weighted")) {
    c.kind = CombinerKind::weighted_sum;
    if (text.size() > 8) {
      if (text[8] != ':') throw std::invalid_argument("bad combiner '" + std::string(text) + "'");
      const std::string num_text(text.substr(9));
      std::size_t used = 0;
      c.weight = std::stod(num_text, &used);
      if (used != num_text.size()) throw std::invalid_argument("bad combiner weight '" + num_text + "'");
    }
    check_weight(c.weight);
  } else if (text == "linear-add" || text == "linear-add:concat") {
    c.kind = CombinerKind::linear_add;
  } else if (text == "linear-add:semantic") {
    c.kind = CombinerKind::linear_add;
    c.input = LinearInput::semantic;
  } else {
    throw std::invalid_argument("unknown combiner '" + std::string(text) +
                                "' (expected add, weighted:<w>, linear-add[:semantic])");
  }
  return c;
}

std::string to_string(const CombinerConfig& config) {
  switch (config.kind) {
    case CombinerKind::straight_add: return "add";
    case CombinerKind::weighted_sum: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "weighted:%g", config.weight);
      return buf;
    }
    case CombinerKind::linear_add:
      return config.input == LinearInput::concat ? "linear-add" : "linear-add:semantic";
  }
  return "?";
}

std::size_t linear_input_width(LinearInput input, std::size_t d_model) {
  return input == LinearInput::concat ? 2 * d_model : d_model;
}

void validate(const CombinerStrategy& strategy, std::size_t d_model) {
  std::visit(overloaded{
                 [](const StraightAdd&) {},
                 [](const WeightedSum& ws) { check_weight(ws.w); },
                 [d_model](const LinearAdd& la) {
                   check_rate(la.dropout_rate);
                   const std::size_t rows = linear_input_width(la.input, d_model);
                   if (la.wc.rows() != rows || la.wc.cols() != d_model) {
                     throw num::ShapeError("LinearAdd: W_c must be " + std::to_string(rows) + "x" +
                                           std::to_string(d_model) + ", got " + la.wc.shape_string());
                   }
                 },
             },
             strategy);
}

Matrix combine(const Matrix& s, const Matrix& p, const CombinerStrategy& strategy, bool training,
               std::uint64_t seed) {
  num::require_same_shape(s, p, "combine");
  validate(strategy, s.cols());
  return std::visit(overloaded{
                        [&](const StraightAdd&) { return num::add(s, p); },
                        [&](const WeightedSum& ws) { return num::add(num::scale(s, ws.w), p); },
                        [&](const LinearAdd& la) {
                          const Matrix in =
                              la.input == LinearInput::concat ? num::concat_cols(s, p) : s;
                          Matrix out = num::dropout_apply(num::matmul(in, la.wc), la.dropout_rate,
                                                          training, seed);
                          num::add_in_place(out, p);
                          return out;
                        },
                    },
                    strategy);
}

Matrix init_linear_add_weights(std::size_t d_model, std::uint64_t seed, double noise,
                               LinearInput input) {
  if (d_model < 2) throw std::invalid_argument("init_linear_add: d_model must be >= 2");
  Matrix wc(linear_input_width(input, d_model), d_model);
  for (std::size_t i = 0; i < d_model; ++i) wc(i, i) = 1.0;
  if (noise > 0.0) {
    num::Rng rng(seed);
    for (double& v : wc.values()) v += rng.uniform(-noise, noise);
  }
  return wc;
}

CombinerStrategy init_linear_add(std::size_t d_model, std::uint64_t seed, double noise,
                                 LinearInput input, double dropout_rate) {
  check_rate(dropout_rate);
  return LinearAdd{init_linear_add_weights(d_model, seed, noise, input), dropout_rate, input};
}

Var combine(Var s, Var p, const CombinerConfig& config, std::optional<Var> wc, double dropout_rate,
            bool training, std::uint64_t seed) {
  num::require_same_shape(s.value(), p.value(), "combine");
  switch (config.kind) {
    case CombinerKind::straight_add: return num::add(s, p);
    case CombinerKind::weighted_sum: return num::add(num::scale(s, config.weight), p);
    case CombinerKind::linear_add: {
      if (!wc) throw std::invalid_argument("combine: LinearAdd requires W_c");
      const Var in = config.input == LinearInput::concat ? num::concat_cols(s, p) : s;
      return num::add(num::dropout(num::matmul(in, *wc), dropout_rate, training, seed), p);
    }
  }
  throw std::invalid_argument("combine: unknown combiner kind");
}

}  // namespace helix::combiner
