#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "helix/numerics/matrix.hpp"

namespace helix::numerics {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  std::size_t d_model = 128;
  std::size_t warmup_steps = 4000;
  /// When set, replaces the warmup schedule with a constant rate.
  std::optional<double> fixed_lr;
};

/// Inverse-square-root schedule with linear warmup:
///   lr(step) = d_model^-0.5 · min(step^-0.5, step · warmup^-1.5)
double warmup_learning_rate(std::size_t d_model, std::size_t warmup_steps, std::uint64_t step);

class AdamState {
 public:
  AdamState(AdamOptions options, std::span<const Matrix* const> params);

  const AdamOptions& options() const noexcept { return options_; }
  std::uint64_t step() const noexcept { return step_; }
  double learning_rate(std::uint64_t step) const;
  const std::vector<Matrix>& first_moments() const noexcept { return m_; }
  const std::vector<Matrix>& second_moments() const noexcept { return v_; }

  /// Increments the step counter, then applies the bias-corrected update.
  /// `params` and `grads` must match the shapes given at construction.
  void apply(std::span<Matrix* const> params, std::span<const Matrix* const> grads);

 private:
  AdamOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t step_ = 0;
};

/// Free-function form of AdamState::apply.
inline void adam_step(AdamState& state, std::span<Matrix* const> params,
                      std::span<const Matrix* const> grads) {
  state.apply(params, grads);
}

}  // namespace helix::numerics
