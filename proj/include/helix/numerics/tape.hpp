#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "helix/numerics/matrix.hpp"

namespace helix::numerics {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear trace of matrix-valued operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so parents always precede their
/// children and backward() is a single reverse sweep. A tape built with
/// recording=false evaluates values only and keeps no backward closures.
class Tape {
 public:
  /// Called during backward with the tape and the node's own id. It reads
  /// grad(self) and accumulates into the parents that require gradients.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Matrix value);
  /// Owned leaf that receives a gradient.
  Var variable(Matrix value);
  /// Borrowed leaf: the matrix must outlive the tape. Receives a gradient.
  Var parameter(const Matrix& value);

  /// Appends an op result. The node requires a gradient iff recording and
  /// any parent does; otherwise `fn` is dropped.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);

  const Matrix& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id()); }
  /// Gradient accumulator, allocated as zeros on first access.
  Matrix& grad(std::size_t id);
  const Matrix& gradient(Var v) const;

  /// Zeroes all accumulators, seeds d(loss)=1 and sweeps in reverse.
  /// Throws std::invalid_argument if loss is not 1×1.
  void backward(Var loss);

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  Var push(Node node);

  std::vector<Node> nodes_;
  bool recording_;
};

// ---- differentiable primitives ---------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var transpose(Var a);
Var concat_cols(Var a, Var b);
/// x + broadcast(bias), bias is 1×cols.
Var add_bias(Var x, Var bias);
Var relu(Var x);
Var softmax_rows(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps);
Var dropout(Var x, double rate, bool training, std::uint64_t seed);
/// Rows of `table` selected by ids (embedding lookup).
Var gather_rows(Var table, std::span<const int> ids);
/// 1×1 sum of all entries.
Var sum(Var x);
/// Weighted mean token cross-entropy, 1×1. Rows with weight 0 are ignored;
/// if all weights are zero the loss is exactly 0.
Var cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights);

}  // namespace helix::numerics
