#include "helix/analysis/pca.hpp"

#include <cmath>
#include <stdexcept>

#include "helix/numerics/ops.hpp"
#include "helix/numerics/sym_eigen.hpp"

namespace helix::analysis {

namespace num = helix::numerics;

double PcaModel::share(std::size_t m) const {
  if (m > explained_variance_ratio.size())
    throw std::out_of_range("PcaModel::share: only " + std::to_string(explained_variance_ratio.size()) +
                            " components fitted");
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += explained_variance_ratio[i];
  return s;
}

PcaModel pca_fit(const Matrix& x, std::size_t k) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n < 2) throw std::invalid_argument("pca_fit: need at least 2 rows, got " + std::to_string(n));
  if (k == 0 || k > std::min(n, d))
    throw std::invalid_argument("pca_fit: k=" + std::to_string(k) + " must be in [1, min(n, d)=" +
                                std::to_string(std::min(n, d)) + "]");
  num::require_finite(x, "pca_fit");

  const Matrix mean = num::column_means(x);
  Matrix centered = x;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = centered.row(r);
    for (std::size_t c = 0; c < d; ++c) row[c] -= mean(0, c);
  }
  Matrix cov = num::scale(num::matmul_tn(centered, centered), 1.0 / static_cast<double>(n - 1));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) cov(i, j) = cov(j, i) = 0.5 * (cov(i, j) + cov(j, i));
  const auto eig = num::sym_eigen(cov);

  PcaModel out;
  out.mean.assign(mean.values().begin(), mean.values().end());
  for (std::size_t i = 0; i < d; ++i) out.total_variance += cov(i, i);
  out.components = Matrix(k, d);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < d; ++c)
      if (std::abs(eig.vectors(c, i)) > std::abs(eig.vectors(arg, i))) arg = c;
    const double sign = eig.vectors(arg, i) < 0.0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < d; ++c) out.components(i, c) = sign * eig.vectors(c, i);
    const double var = std::max(0.0, eig.values[i]);
    out.explained_variance.push_back(var);
    out.explained_variance_ratio.push_back(out.total_variance > 0.0 ? var / out.total_variance : 0.0);
  }
  return out;
}

Matrix pca_transform(const PcaModel& pca, const Matrix& x) {
  if (x.cols() != pca.mean.size())
    throw num::ShapeError("pca_transform: input has " + std::to_string(x.cols()) + " columns, model expects " +
                          std::to_string(pca.mean.size()));
  Matrix centered = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = centered.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) row[c] -= pca.mean[c];
  }
  return num::matmul_nt(centered, pca.components);
}

Matrix pca_reconstruct(const PcaModel& pca, const Matrix& z) {
  if (z.cols() != pca.k())
    throw num::ShapeError("pca_reconstruct: input has " + std::to_string(z.cols()) + " columns, model has " +
                          std::to_string(pca.k()) + " components");
  Matrix out = num::matmul(z, pca.components);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] += pca.mean[c];
  }
  return out;
}

}  // namespace helix::analysis
