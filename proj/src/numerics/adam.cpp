#include "helix/numerics/adam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace helix::numerics {

double warmup_learning_rate(std::size_t d_model, std::size_t warmup_steps, std::uint64_t step) {
  if (step == 0) return 0.0;
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(std::max<std::size_t>(warmup_steps, 1));
  return std::pow(static_cast<double>(d_model), -0.5) * std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

AdamState::AdamState(AdamOptions options, std::span<const Matrix* const> params)
    : options_(options) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Matrix* p : params) {
    m_.emplace_back(p->rows(), p->cols());
    v_.emplace_back(p->rows(), p->cols());
  }
}

double AdamState::learning_rate(std::uint64_t step) const {
  if (options_.fixed_lr) return *options_.fixed_lr;
  return warmup_learning_rate(options_.d_model, options_.warmup_steps, step);
}

void AdamState::apply(std::span<Matrix* const> params, std::span<const Matrix* const> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("AdamState::apply: expected " + std::to_string(m_.size()) +
                                " parameters");
  }
  ++step_;
  const double lr = learning_rate(step_);
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = *grads[i];
    if (!p.same_shape(m_[i]) || !g.same_shape(m_[i])) {
      throw ShapeError("AdamState::apply: parameter " + std::to_string(i) + " shape " +
                       p.shape_string() + " / grad " + g.shape_string() + " vs state " +
                       m_[i].shape_string());
    }
    auto pv = p.values();
    auto gv = g.values();
    auto mv = m_[i].values();
    auto vv = v_[i].values();
    for (std::size_t j = 0; j < pv.size(); ++j) {
      mv[j] = b1 * mv[j] + (1.0 - b1) * gv[j];
      vv[j] = b2 * vv[j] + (1.0 - b2) * gv[j] * gv[j];
      const double mhat = mv[j] / c1;
      const double vhat = vv[j] / c2;
      pv[j] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

}  // namespace helix::numerics
