#include "helix/verify/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace helix::verify {

namespace {

double evaluate(const LossBuilder& loss, std::span<Matrix* const> inputs) {
  Tape tape(false);
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (Matrix* m : inputs) leaves.push_back(tape.parameter(*m));
  const Var out = loss(tape, leaves);
  if (out.rows() != 1 || out.cols() != 1) throw std::invalid_argument("gradcheck: loss must be 1x1");
  return out.value()(0, 0);
}

}  // namespace

GradCheckResult check_gradients_inplace(const LossBuilder& loss, std::span<Matrix* const> inputs,
                                        double h, double zero_floor) {
  std::vector<Matrix> analytic;
  {
    Tape tape(true);
    std::vector<Var> leaves;
    for (Matrix* m : inputs) leaves.push_back(tape.parameter(*m));
    const Var out = loss(tape, leaves);
    tape.backward(out);
    for (const Var& v : leaves) {
      const Matrix& g = tape.gradient(v);
      analytic.push_back(g.empty() ? Matrix(v.rows(), v.cols()) : g);
    }
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix& m = *inputs[k];
    double diff2 = 0.0;
    double a2 = 0.0;
    double n2 = 0.0;
    auto vals = m.values();
    auto an = analytic[k].values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = evaluate(loss, inputs);
      vals[i] = orig - h;
      const double fm = evaluate(loss, inputs);
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      diff2 += (an[i] - numeric) * (an[i] - numeric);
      a2 += an[i] * an[i];
      n2 += numeric * numeric;
    }
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    const double rel = denom < zero_floor ? 0.0 : std::sqrt(diff2) / denom;
    result.relative_errors.push_back(rel);
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_input = k;
    }
  }
  return result;
}

GradCheckResult check_gradients(const LossBuilder& loss, std::vector<Matrix> inputs, double h,
                                double zero_floor) {
  std::vector<Matrix*> ptrs;
  for (Matrix& m : inputs) ptrs.push_back(&m);
  return check_gradients_inplace(loss, ptrs, h, zero_floor);
}

}  // namespace helix::verify
