#include "helix/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "helix/numerics/rng.hpp"

namespace helix::numerics {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
  return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}
MutMap view(Matrix& m) {
  return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                   b.shape_string());
}

}  // namespace

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) shape_fail(op, a, b);
}

Matrix tensor_core(const Matrix& a, const Matrix& b, TensorOp kind) {
  switch (kind) {
    case TensorOp::matmul: return matmul(a, b);
    case TensorOp::add: return add(a, b);
    case TensorOp::sub: return sub(a, b);
    case TensorOp::scale:
      if (b.size() != 1) shape_fail("scale", a, b);
      return scale(a, b(0, 0));
    case TensorOp::transpose: return transpose(a);
    case TensorOp::concat_cols: return concat_cols(a, b);
  }
  throw std::invalid_argument("tensor_core: unknown op");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_fail("matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  if (a.rows() == 0) return out;
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

void matmul_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols()) {
    shape_fail("matmul_accumulate", a, b);
  }
  if (a.cols() == 0) return;
  view(out).noalias() += view(a) * view(b);
}

void matmul_tn_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    shape_fail("matmul_tn_accumulate", a, b);
  }
  if (a.rows() == 0) return;
  view(out).noalias() += view(a).transpose() * view(b);
}

void matmul_nt_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows()) {
    shape_fail("matmul_nt_accumulate", a, b);
  }
  if (a.cols() == 0) return;
  view(out).noalias() += view(a) * view(b).transpose();
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  add_in_place(out, b);
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a;
  axpy(-1.0, b, out);
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  }
  return out;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_fail("concat_cols", a, b);
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + a.shape_string());
  }
  Matrix out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto src = a.row(r).subspan(begin, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix slice_rows(const Matrix& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + a.shape_string());
  }
  std::vector<double> data(a.data() + begin * a.cols(), a.data() + (begin + count) * a.cols());
  return Matrix(count, a.cols(), std::move(data));
}

Matrix add_row(const Matrix& x, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) shape_fail("add_row", x, row);
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto dst = out.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += row(0, c);
  }
  return out;
}

void axpy(double s, const Matrix& b, Matrix& a) {
  require_same_shape(a, b, "axpy");
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += s * bv[i];
}

void add_in_place(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add_in_place");
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += bv[i];
}

double sum(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
  return m;
}

Matrix column_sums(const Matrix& a) {
  Matrix out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto src = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += src[c];
  }
  return out;
}

Matrix column_means(const Matrix& a) {
  Matrix out = column_sums(a);
  if (a.rows() > 0) {
    for (double& v : out.values()) v /= static_cast<double>(a.rows());
  }
  return out;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto src = x.row(r);
    auto dst = out.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : src) mx = std::max(mx, v);
    double total = 0.0;
    for (std::size_t c = 0; c < src.size(); ++c) {
      dst[c] = std::exp(src[c] - mx);
      total += dst[c];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps,
                  LayerNormStats* stats) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols()) shape_fail("layer_norm gamma", x, gamma);
  if (beta.rows() != 1 || beta.cols() != x.cols()) shape_fail("layer_norm beta", x, beta);
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  Matrix out(x.rows(), x.cols());
  if (stats) {
    stats->mean.assign(x.rows(), 0.0);
    stats->inv_std.assign(x.rows(), 0.0);
  }
  const double n = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto src = x.row(r);
    double mean = 0.0;
    for (double v : src) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : src) var += (v - mean) * (v - mean);
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) {
      dst[c] = (src[c] - mean) * inv_std * gamma(0, c) + beta(0, c);
    }
    if (stats) {
      stats->mean[r] = mean;
      stats->inv_std[r] = inv_std;
    }
  }
  return out;
}

Matrix dropout_apply(const Matrix& x, double rate, bool training, std::uint64_t seed,
                     Matrix* mask) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) {
    if (mask) *mask = Matrix(x.rows(), x.cols(), 1.0);
    return x;
  }
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix m(x.rows(), x.cols());
  Matrix out(x.rows(), x.cols());
  auto mv = m.values();
  auto ov = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mv[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    ov[i] = xv[i] * mv[i];
  }
  if (mask) *mask = std::move(m);
  return out;
}

}  // namespace helix::numerics
