#include "helix/model/attention.hpp"

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>

#include "helix/numerics/ops.hpp"

namespace helix::model {

namespace num = helix::numerics;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Block = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CBlock = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

constexpr double kHiddenThreshold = kMaskValue / 2;

/// Scalar exp so masked entries underflow to exactly zero; Eigen's packet exp
/// clamps its argument and returns a subnormal there.
void softmax_in_place(RowMat& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto row = s.row(i);
    const double m = row.maxCoeff();
    double total = 0.0;
    for (Eigen::Index j = 0; j < row.size(); ++j) total += row(j) = std::exp(row(j) - m);
    row /= total;
  }
}

}  // namespace

Matrix attention_core(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& mask) {
  return attention_core(q, k, v, mask, nullptr);
}

Matrix attention_core(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& mask, Matrix* weights) {
  if (q.cols() != k.cols())
    throw num::ShapeError("attention_core: Q cols " + q.shape_string() + " vs K cols " + k.shape_string());
  if (k.rows() != v.rows())
    throw num::ShapeError("attention_core: K rows " + k.shape_string() + " vs V rows " + v.shape_string());
  if (mask.rows() != q.rows() || mask.cols() != k.rows())
    throw num::ShapeError("attention_core: mask " + mask.shape_string() + " vs scores " + std::to_string(q.rows()) +
                          "x" + std::to_string(k.rows()));
  if (q.cols() == 0) throw num::ShapeError("attention_core: d_k must be positive");
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    bool visible = false;
    for (double m : mask.row(i)) visible = visible || m > kHiddenThreshold;
    if (!visible) throw std::invalid_argument("attention_core: query row " + std::to_string(i) + " has no visible key");
  }
  Matrix scores = num::scale(num::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  num::add_in_place(scores, mask);
  Matrix p = num::softmax_rows(scores);
  Matrix out = num::matmul(p, v);
  if (weights) *weights = std::move(p);
  return out;
}

Matrix multi_head(const Matrix& q, const Matrix& k, const Matrix& v, const std::vector<HeadProjection>& heads,
                  const Matrix& wo, const Matrix& mask) {
  if (heads.empty()) throw std::invalid_argument("multi_head: no heads");
  Matrix concat;
  for (const auto& h : heads) {
    Matrix o = attention_core(num::matmul(q, h.wq), num::matmul(k, h.wk), num::matmul(v, h.wv), mask);
    concat = concat.empty() ? std::move(o) : num::concat_cols(concat, o);
  }
  return num::matmul(concat, wo);
}

Matrix causal_mask(std::size_t n) { return padding_mask(n, n, n, true); }

Matrix padding_mask(std::size_t q_len, std::size_t k_len, std::size_t valid_keys, bool causal) {
  Matrix m(q_len, k_len);
  for (std::size_t i = 0; i < q_len; ++i)
    for (std::size_t j = 0; j < k_len; ++j)
      if (j >= valid_keys || (causal && j > i)) m(i, j) = kMaskValue;
  return m;
}

void AttentionLayout::validate(std::size_t q_rows, std::size_t k_rows) const {
  if (q_rows != batch * q_len || k_rows != batch * k_len)
    throw num::ShapeError("attention: layout " + std::to_string(batch) + "x(" + std::to_string(q_len) + "," +
                          std::to_string(k_len) + ") vs rows " + std::to_string(q_rows) + "," + std::to_string(k_rows));
  if (key_lengths.size() != batch) throw std::invalid_argument("attention: key_lengths size differs from batch");
  for (std::size_t b = 0; b < batch; ++b)
    if (key_lengths[b] == 0 || key_lengths[b] > k_len)
      throw std::invalid_argument("attention: batch row " + std::to_string(b) + " has no visible key");
}

Matrix AttentionLayout::mask(std::size_t b) const { return padding_mask(q_len, k_len, key_lengths.at(b), causal); }

Var attention(Var q, Var k, Var v, std::size_t heads, const AttentionLayout& layout) {
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  if (qv.cols() != kv.cols() || kv.cols() != vv.cols() || kv.rows() != vv.rows())
    throw num::ShapeError("attention: q " + qv.shape_string() + ", k " + kv.shape_string() + ", v " + vv.shape_string());
  const std::size_t d = qv.cols();
  if (heads == 0 || d % heads != 0) throw std::invalid_argument("attention: width not divisible by heads");
  layout.validate(qv.rows(), kv.rows());
  const std::size_t dk = d / heads;
  const auto sd = static_cast<Eigen::Index>(d);
  const auto lq = static_cast<Eigen::Index>(layout.q_len);
  const auto lk = static_cast<Eigen::Index>(layout.k_len);
  const auto edk = static_cast<Eigen::Index>(dk);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dk));

  num::Tape& tape = *q.tape();
  const bool keep = tape.recording();
  std::vector<RowMat> probs;
  if (keep) probs.reserve(layout.batch * heads);

  Matrix out(qv.rows(), d);
  RowMat s(lq, lk);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    const std::size_t klen = layout.key_lengths[b];
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t qoff = b * layout.q_len * d + h * dk;
      const std::size_t koff = b * layout.k_len * d + h * dk;
      CBlock qb(qv.data() + qoff, lq, edk, Eigen::OuterStride<>(sd));
      CBlock kb(kv.data() + koff, lk, edk, Eigen::OuterStride<>(sd));
      CBlock vb(vv.data() + koff, lk, edk, Eigen::OuterStride<>(sd));
      s.noalias() = qb * kb.transpose();
      s *= inv;
      for (Eigen::Index i = 0; i < lq; ++i)
        for (Eigen::Index j = 0; j < lk; ++j)
          if (static_cast<std::size_t>(j) >= klen || (layout.causal && j > i)) s(i, j) += kMaskValue;
      softmax_in_place(s);
      Block ob(out.data() + qoff, lq, edk, Eigen::OuterStride<>(sd));
      ob.noalias() = s * vb;
      if (keep) probs.push_back(s);
    }
  }

  return tape.record(std::move(out), {q, k, v},
                     [q, k, v, heads, layout, probs = std::move(probs), d, dk, inv](num::Tape& t, std::size_t self) {
                       const Matrix& g = t.grad(self);
                       const bool gq_on = t.requires_grad(q);
                       const bool gk_on = t.requires_grad(k);
                       const bool gv_on = t.requires_grad(v);
                       Matrix* gq = gq_on ? &t.grad(q.id()) : nullptr;
                       Matrix* gk = gk_on ? &t.grad(k.id()) : nullptr;
                       Matrix* gv = gv_on ? &t.grad(v.id()) : nullptr;
                       const Matrix& qv = q.value();
                       const Matrix& kv = k.value();
                       const Matrix& vv = v.value();
                       const auto sd = static_cast<Eigen::Index>(d);
                       const auto lq = static_cast<Eigen::Index>(layout.q_len);
                       const auto lk = static_cast<Eigen::Index>(layout.k_len);
                       const auto edk = static_cast<Eigen::Index>(dk);
                       RowMat dp(lq, lk);
                       for (std::size_t b = 0; b < layout.batch; ++b) {
                         for (std::size_t h = 0; h < heads; ++h) {
                           const RowMat& p = probs[b * heads + h];
                           const std::size_t qoff = b * layout.q_len * d + h * dk;
                           const std::size_t koff = b * layout.k_len * d + h * dk;
                           CBlock go(g.data() + qoff, lq, edk, Eigen::OuterStride<>(sd));
                           CBlock qb(qv.data() + qoff, lq, edk, Eigen::OuterStride<>(sd));
                           CBlock kb(kv.data() + koff, lk, edk, Eigen::OuterStride<>(sd));
                           CBlock vb(vv.data() + koff, lk, edk, Eigen::OuterStride<>(sd));
                           if (gv) {
                             Block gvb(gv->data() + koff, lk, edk, Eigen::OuterStride<>(sd));
                             gvb.noalias() += p.transpose() * go;
                           }
                           if (!gq && !gk) continue;
                           dp.noalias() = go * vb.transpose();
                           for (Eigen::Index i = 0; i < lq; ++i) {
                             const double dot = p.row(i).dot(dp.row(i));
                             dp.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix() * inv;
                           }
                           if (gq) {
                             Block gqb(gq->data() + qoff, lq, edk, Eigen::OuterStride<>(sd));
                             gqb.noalias() += dp * kb;
                           }
                           if (gk) {
                             Block gkb(gk->data() + koff, lk, edk, Eigen::OuterStride<>(sd));
                             gkb.noalias() += dp.transpose() * qb;
                           }
                         }
                       }
                     });
}

}  // namespace helix::model
