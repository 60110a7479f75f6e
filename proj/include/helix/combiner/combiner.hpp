#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "helix/numerics/matrix.hpp"
#include "helix/numerics/tape.hpp"

namespace helix::combiner {

using numerics::Matrix;
using numerics::Var;

/// What the LinearAdd dense layer reads: concat(S, P) (2·d_model inputs) or S alone.
enum class LinearInput { concat, semantic };

struct StraightAdd {};

struct WeightedSum {
  double w = 0.3;
};

struct LinearAdd {
  Matrix wc;  // (2·d_model)×d_model for concat, d_model×d_model for semantic
  double dropout_rate = 0.1;
  LinearInput input = LinearInput::concat;
};

/// S + P, w·S + P, or dropout([S|P]·W_c) + P.
using CombinerStrategy = std::variant<StraightAdd, WeightedSum, LinearAdd>;

enum class CombinerKind { straight_add, weighted_sum, linear_add };

/// Weight-free description used in model configuration. The LinearAdd
/// matrix lives with the model parameters.
struct CombinerConfig {
  CombinerKind kind = CombinerKind::straight_add;
  double weight = 0.3;
  LinearInput input = LinearInput::concat;
  /// Overrides the model dropout rate inside LinearAdd.
  std::optional<double> dropout_rate = std::nullopt;

  friend bool operator==(const CombinerConfig&, const CombinerConfig&) = default;
};

/// "add", "weighted:<w>", "linear-add" or "linear-add:semantic".
CombinerConfig parse_combiner(std::string_view text);
std::string to_string(const CombinerConfig& config);

/// Shape of W_c for the given input mode.
std::size_t linear_input_width(LinearInput input, std::size_t d_model);

/// Throws std::invalid_argument on w <= 0, bad W_c shape or dropout outside [0,1).
void validate(const CombinerStrategy& strategy, std::size_t d_model);

/// S is the √d_model-scaled token embedding, P the positional rows; both seq×d_model.
Matrix combine(const Matrix& s, const Matrix& p, const CombinerStrategy& strategy, bool training,
               std::uint64_t seed);

/// W_c = [I; 0] + U(-noise, noise) (or I + noise for semantic input), so the
/// layer starts next to StraightAdd.
CombinerStrategy init_linear_add(std::size_t d_model, std::uint64_t seed, double noise = 0.01,
                                 LinearInput input = LinearInput::concat,
                                 double dropout_rate = 0.1);
/// Just the W_c matrix of init_linear_add.
Matrix init_linear_add_weights(std::size_t d_model, std::uint64_t seed, double noise,
                               LinearInput input);

/// Differentiable form. `wc` is required for LinearAdd and ignored otherwise.
Var combine(Var s, Var p, const CombinerConfig& config, std::optional<Var> wc,
            double dropout_rate, bool training, std::uint64_t seed);

}  // namespace helix::combiner
