#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "helix/numerics/matrix.hpp"

namespace helix::numerics {

enum class TensorOp { matmul, add, sub, scale, transpose, concat_cols };

/// Uniform entry point over the basic binary kernels. For `scale` the scalar
/// is b(0,0); for `transpose` b is ignored.
Matrix tensor_core(const Matrix& a, const Matrix& b, TensorOp kind);

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// out += a·b (out must already have the product shape).
void matmul_accumulate(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn_accumulate(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt_accumulate(const Matrix& a, const Matrix& b, Matrix& out);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix concat_cols(const Matrix& a, const Matrix& b);
/// Columns [begin, begin+count).
Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t count);
/// Rows [begin, begin+count).
Matrix slice_rows(const Matrix& a, std::size_t begin, std::size_t count);
/// x + broadcast of a 1×cols row vector.
Matrix add_row(const Matrix& x, const Matrix& row);

/// a += s·b
void axpy(double s, const Matrix& b, Matrix& a);
void add_in_place(Matrix& a, const Matrix& b);

double sum(const Matrix& a);
double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
/// Sum over rows, result 1×cols.
Matrix column_sums(const Matrix& a);
/// Column means, result 1×cols.
Matrix column_means(const Matrix& a);

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& x);
Matrix relu(const Matrix& x);

struct LayerNormStats {
  std::vector<double> mean;
  std::vector<double> inv_std;
};

/// Per-row normalisation with population variance, then gamma·x̂ + beta.
/// gamma and beta are 1×cols.
Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps,
                  LayerNormStats* stats = nullptr);

/// Inverted dropout. When training is false or rate is 0 the input is
/// returned unchanged. The optional mask receives the per-entry multiplier
/// (0 or 1/(1-rate)).
Matrix dropout_apply(const Matrix& x, double rate, bool training, std::uint64_t seed,
                     Matrix* mask = nullptr);

void require_same_shape(const Matrix& a, const Matrix& b, const char* op);

}  // namespace helix::numerics
