#include "helix/numerics/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "helix/numerics/ops.hpp"

namespace helix::numerics {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = recording_;
  return push(std::move(n));
}

Var Tape::parameter(const Matrix& value) {
  Node n;
  n.external = &value;
  n.requires_grad = recording_;
  return push(std::move(n));
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  if (recording_) {
    for (const Var& p : parents) {
      if (p.tape() != this) throw std::invalid_argument("Tape::record: parent from another tape");
      if (nodes_[p.id()].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

const Matrix& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

Matrix& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    const Matrix& v = value(id);
    n.grad = Matrix(v.rows(), v.cols());
  }
  return n.grad;
}

const Matrix& Tape::gradient(Var v) const {
  const Node& n = nodes_[v.id()];
  if (!n.requires_grad) throw std::invalid_argument("Tape::gradient: node does not require grad");
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("Tape::backward: foreign loss node");
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be 1x1, got " + lv.shape_string());
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].requires_grad) {
      const Matrix& v = value(i);
      nodes_[i].grad = Matrix(v.rows(), v.cols());
    } else {
      nodes_[i].grad = Matrix();
    }
  }
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad(0, 0) = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
}

// ---- primitives --------------------------------------------------------------

namespace {

bool needs(Tape& t, Var v) { return t.requires_grad(v.id()); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape();
  return t.record(numerics::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (needs(t, a)) matmul_nt_accumulate(g, b.value(), t.grad(a.id()));
    if (needs(t, b)) matmul_tn_accumulate(a.value(), g, t.grad(b.id()));
  });
}

Var add(Var a, Var b) {
  Tape& t = *a.tape();
  return t.record(numerics::add(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (needs(t, a)) add_in_place(t.grad(a.id()), g);
    if (needs(t, b)) add_in_place(t.grad(b.id()), g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = *a.tape();
  return t.record(numerics::sub(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (needs(t, a)) add_in_place(t.grad(a.id()), g);
    if (needs(t, b)) axpy(-1.0, g, t.grad(b.id()));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.record(numerics::scale(a.value(), s), {a}, [a, s](Tape& t, std::size_t self) {
    axpy(s, t.grad(self), t.grad(a.id()));
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  return t.record(numerics::transpose(a.value()), {a}, [a](Tape& t, std::size_t self) {
    add_in_place(t.grad(a.id()), numerics::transpose(t.grad(self)));
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = *a.tape();
  return t.record(numerics::concat_cols(a.value(), b.value()), {a, b},
                  [a, b](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    const std::size_t ac = a.cols();
                    if (needs(t, a)) add_in_place(t.grad(a.id()), slice_cols(g, 0, ac));
                    if (needs(t, b)) add_in_place(t.grad(b.id()), slice_cols(g, ac, b.cols()));
                  });
}

Var add_bias(Var x, Var bias) {
  Tape& t = *x.tape();
  return t.record(add_row(x.value(), bias.value()), {x, bias}, [x, bias](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (needs(t, x)) add_in_place(t.grad(x.id()), g);
    if (needs(t, bias)) add_in_place(t.grad(bias.id()), column_sums(g));
  });
}

Var relu(Var x) {
  Tape& t = *x.tape();
  return t.record(numerics::relu(x.value()), {x}, [x](Tape& t, std::size_t self) {
    const auto g = t.grad(self).values();
    const auto xv = x.value().values();
    auto gx = t.grad(x.id()).values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var softmax_rows(Var x) {
  Tape& t = *x.tape();
  Matrix y = numerics::softmax_rows(x.value());
  Var out = t.record(std::move(y), {x}, [x](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad(x.id());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
  return out;
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = *x.tape();
  LayerNormStats stats;
  Matrix y = numerics::layer_norm(x.value(), gamma.value(), beta.value(), eps,
                                  t.recording() ? &stats : nullptr);
  return t.record(std::move(y), {x, gamma, beta},
                  [x, gamma, beta, stats = std::move(stats)](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    const Matrix& xv = x.value();
                    const Matrix& gm = gamma.value();
                    const std::size_t n = xv.cols();
                    const double inv_n = 1.0 / static_cast<double>(n);
                    const bool gx_needed = needs(t, x);
                    Matrix* gx = gx_needed ? &t.grad(x.id()) : nullptr;
                    Matrix* gg = needs(t, gamma) ? &t.grad(gamma.id()) : nullptr;
                    Matrix* gb = needs(t, beta) ? &t.grad(beta.id()) : nullptr;
                    std::vector<double> xhat(n), dxhat(n);
                    for (std::size_t r = 0; r < xv.rows(); ++r) {
                      const double mean = stats.mean[r];
                      const double inv_std = stats.inv_std[r];
                      double sum_dxhat = 0.0;
                      double sum_dxhat_xhat = 0.0;
                      for (std::size_t c = 0; c < n; ++c) {
                        xhat[c] = (xv(r, c) - mean) * inv_std;
                        dxhat[c] = g(r, c) * gm(0, c);
                        sum_dxhat += dxhat[c];
                        sum_dxhat_xhat += dxhat[c] * xhat[c];
                        if (gg) (*gg)(0, c) += g(r, c) * xhat[c];
                        if (gb) (*gb)(0, c) += g(r, c);
                      }
                      if (gx) {
                        for (std::size_t c = 0; c < n; ++c) {
                          (*gx)(r, c) += inv_std * (dxhat[c] - inv_n * sum_dxhat -
                                                    xhat[c] * inv_n * sum_dxhat_xhat);
                        }
                      }
                    }
                  });
}

Var dropout(Var x, double rate, bool training, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  Tape& t = *x.tape();
  Matrix mask;
  Matrix y = dropout_apply(x.value(), rate, training, seed, &mask);
  return t.record(std::move(y), {x}, [x, mask = std::move(mask)](Tape& t, std::size_t self) {
    add_in_place(t.grad(x.id()), hadamard(t.grad(self), mask));
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Tape& t = *table.tape();
  const Matrix& tv = table.value();
  Matrix out(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(tv.rows()) + " rows");
    }
    auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return t.record(std::move(out), {table}, [table, saved = std::move(saved)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& gt = t.grad(table.id());
    for (std::size_t i = 0; i < saved.size(); ++i) {
      auto dst = gt.row(static_cast<std::size_t>(saved[i]));
      auto src = g.row(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

Var sum(Var x) {
  Tape& t = *x.tape();
  return t.record(Matrix(1, 1, numerics::sum(x.value())), {x}, [x](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    for (double& v : t.grad(x.id()).values()) v += g;
  });
}

Var cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights) {
  Tape& t = *logits.tape();
  const Matrix& z = logits.value();
  if (targets.size() != z.rows() || weights.size() != z.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets / " +
                     std::to_string(weights.size()) + " weights for logits " + z.shape_string());
  }
  double total_weight = 0.0;
  for (double w : weights) total_weight += w;
  Matrix probs = numerics::softmax_rows(z);
  double loss = 0.0;
  if (total_weight > 0.0) {
    for (std::size_t r = 0; r < z.rows(); ++r) {
      if (weights[r] == 0.0) continue;
      const auto tgt = targets[r];
      if (tgt < 0 || static_cast<std::size_t>(tgt) >= z.cols()) {
        throw std::out_of_range("cross_entropy: target id " + std::to_string(tgt) + " out of range");
      }
      // log-softmax computed directly for accuracy at tiny probabilities
      double mx = -std::numeric_limits<double>::infinity();
      for (double v : z.row(r)) mx = std::max(mx, v);
      double s = 0.0;
      for (double v : z.row(r)) s += std::exp(v - mx);
      loss -= weights[r] * (z(r, static_cast<std::size_t>(tgt)) - mx - std::log(s));
    }
    loss /= total_weight;
  }
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<double> wt(weights.begin(), weights.end());
  return t.record(Matrix(1, 1, loss), {logits},
                  [logits, probs = std::move(probs), tg = std::move(tg), wt = std::move(wt),
                   total_weight](Tape& t, std::size_t self) {
                    if (total_weight <= 0.0) return;
                    const double g = t.grad(self)(0, 0) / total_weight;
                    Matrix& gz = t.grad(logits.id());
                    for (std::size_t r = 0; r < probs.rows(); ++r) {
                      if (wt[r] == 0.0) continue;
                      const double f = g * wt[r];
                      auto dst = gz.row(r);
                      auto p = probs.row(r);
                      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += f * p[c];
                      dst[static_cast<std::size_t>(tg[r])] -= f;
                    }
                  });
}

}  // namespace helix::numerics
