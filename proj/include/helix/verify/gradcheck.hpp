#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "helix/numerics/matrix.hpp"
#include "helix/numerics/tape.hpp"

namespace helix::verify {

using numerics::Matrix;
using numerics::Tape;
using numerics::Var;

/// Builds a scalar loss from the given leaves on the given tape. Must be a
/// pure function of the leaf values.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  /// Per input: ||analytic - numeric|| / (||analytic|| + ||numeric||).
  std::vector<double> relative_errors;
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
};

/// Central differences with step h against the tape's reverse sweep.
/// Inputs whose analytic and numeric gradients are both below `zero_floor`
/// in norm count as agreeing.
GradCheckResult check_gradients(const LossBuilder& loss, std::vector<Matrix> inputs,
                                double h = 1e-5, double zero_floor = 1e-12);

/// Variant over externally owned matrices (e.g. model parameters), each
/// bound with Tape::parameter. The matrices are perturbed in place and
/// restored.
GradCheckResult check_gradients_inplace(const LossBuilder& loss, std::span<Matrix* const> inputs,
                                        double h = 1e-5, double zero_floor = 1e-12);

}  // namespace helix::verify
