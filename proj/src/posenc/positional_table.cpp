#include "helix/posenc/positional_table.hpp"

#include "helix/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

namespace helix::posenc {

PositionalTable::PositionalTable(std::size_t max_pos, std::size_t d_model, double base)
    : base_(base) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw std::invalid_argument("PositionalTable: d_model must be a positive even number, got " +
                                std::to_string(d_model));
  }
  if (max_pos < 1) throw std::invalid_argument("PositionalTable: max_pos must be >= 1");
  if (!(base > 1.0)) throw std::invalid_argument("PositionalTable: base must exceed 1");
  table_ = Matrix(max_pos, d_model);
  const std::size_t half = d_model / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = frequency(i);
    for (std::size_t p = 0; p < max_pos; ++p) {
      const double angle = static_cast<double>(p) * freq;
      table_(p, i) = std::sin(angle);
      table_(p, half + i) = std::cos(angle);
    }
  }
}

double PositionalTable::frequency(std::size_t i) const {
  const double d = static_cast<double>(d_model());
  return 1.0 / std::pow(base_, 2.0 * static_cast<double>(i) / d);
}

Matrix PositionalTable::rows(std::size_t count) const {
  if (count > max_pos()) {
    throw std::out_of_range("PositionalTable::rows: " + std::to_string(count) + " > max_pos " +
                            std::to_string(max_pos()));
  }
  return numerics::slice_rows(table_, 0, count);
}

void PositionalTable::perturb(std::size_t pos, std::size_t dim, double delta) { table_(pos, dim) += delta; }

double pe_inner(const PositionalTable& table, std::size_t p, std::size_t q) {
  if (p >= table.max_pos() || q >= table.max_pos()) {
    throw std::out_of_range("pe_inner: position " + std::to_string(std::max(p, q)) +
                            " outside table of " + std::to_string(table.max_pos()) + " rows");
  }
  const auto a = table.table().row(p);
  const auto b = table.table().row(q);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double shift_invariance_residual(const PositionalTable& table, std::size_t pq_limit,
                                 std::size_t max_offset) {
  const std::size_t n = table.max_pos();
  // Gram matrix once; the search is then O(n^2 * offsets) lookups.
  const Matrix gram = numerics::matmul_nt(table.table(), table.table());
  double worst = 0.0;
  const std::size_t limit = std::min(pq_limit, n);
  for (std::size_t p = 0; p < limit; ++p) {
    for (std::size_t q = 0; q < limit; ++q) {
      for (std::size_t d = 1; d <= max_offset; ++d) {
        if (p + d >= n || q + d >= n) break;
        worst = std::max(worst, std::abs(gram(p + d, q + d) - gram(p, q)));
      }
    }
  }
  return worst;
}

double shift_invariance_residual(const PositionalTable& table, std::size_t max_offset) {
  return shift_invariance_residual(table, table.max_pos(), max_offset);
}

void write_csv(const PositionalTable& table, std::ostream& out) {
  out << "pos,dim,value\n";
  char buf[64];
  for (std::size_t p = 0; p < table.max_pos(); ++p) {
    for (std::size_t d = 0; d < table.d_model(); ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", table.table()(p, d));
      out << p << ',' << d << ',' << buf << '\n';
    }
  }
}

}  // namespace helix::posenc
