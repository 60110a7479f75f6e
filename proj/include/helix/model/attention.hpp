#pragma once

#include <cstddef>
#include <vector>

#include "helix/numerics/matrix.hpp"
#include "helix/numerics/tape.hpp"

namespace helix::model {

using numerics::Matrix;
using numerics::Var;

/// Additive mask value for hidden keys.
inline constexpr double kMaskValue = -1e9;

/// softmax_rows(Q·Kᵀ/√d_k + mask)·V with d_k = Q.cols(). Mask entries are 0
/// (visible) or kMaskValue (hidden). Throws std::invalid_argument when a query
/// row has no visible key, ShapeError on inconsistent shapes.
Matrix attention_core(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& mask);
/// Same, also returning the attention weights.
Matrix attention_core(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& mask, Matrix* weights);

struct HeadProjection {
  Matrix wq;  // d_model × d_k
  Matrix wk;
  Matrix wv;
};

/// concat_h attention_core(Q·W_h^Q, K·W_h^K, V·W_h^V, mask) · W^O
Matrix multi_head(const Matrix& q, const Matrix& k, const Matrix& v, const std::vector<HeadProjection>& heads,
                  const Matrix& wo, const Matrix& mask);

Matrix causal_mask(std::size_t n);
/// Keys at index >= valid_keys are hidden; optional causal restriction.
Matrix padding_mask(std::size_t q_len, std::size_t k_len, std::size_t valid_keys, bool causal = false);

/// Batched attention geometry. Queries are rows b·q_len + i, keys rows
/// b·k_len + j. Key j of batch b is visible to query i iff
/// j < key_lengths[b] and, when causal, j <= i.
struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t q_len = 0;
  std::size_t k_len = 0;
  std::vector<std::size_t> key_lengths;
  bool causal = false;

  void validate(std::size_t q_rows, std::size_t k_rows) const;
  Matrix mask(std::size_t b) const;
};

/// Differentiable scaled dot-product attention over `heads` column blocks of
/// already projected q, k, v (each block d_model/heads wide). Output has the
/// shape of q with heads concatenated in column order.
Var attention(Var q, Var k, Var v, std::size_t heads, const AttentionLayout& layout);

}  // namespace helix::model
