#pragma once

#include <cstddef>
#include <iosfwd>

#include "helix/numerics/matrix.hpp"

namespace helix::posenc {

using numerics::Matrix;

/// Sinusoidal "clock" encoding with sines grouped in the first half of the
/// columns and cosines in the second half:
///   table(p, i)             = sin(p / base^(2i/d_model))
///   table(p, d_model/2 + i) = cos(p / base^(2i/d_model))      0 <= i < d_model/2
/// Every row therefore has norm sqrt(d_model/2).
class PositionalTable {
 public:
  PositionalTable(std::size_t max_pos, std::size_t d_model, double base = 10000.0);

  std::size_t max_pos() const noexcept { return table_.rows(); }
  std::size_t d_model() const noexcept { return table_.cols(); }
  double base() const noexcept { return base_; }
  const Matrix& table() const noexcept { return table_; }

  /// Angular frequency of clock hand i: 1 / base^(2i/d_model).
  double frequency(std::size_t i) const;
  /// Rows [0, count) as a count×d_model matrix.
  Matrix rows(std::size_t count) const;

  /// Test hook for the detector self-test: overwrite a single entry.
  void perturb(std::size_t pos, std::size_t dim, double delta);

 private:
  Matrix table_;
  double base_;
};

inline PositionalTable build_table(std::size_t max_pos, std::size_t d_model, double base = 10000.0) {
  return PositionalTable(max_pos, d_model, base);
}

/// Euclidean inner product of rows p and q.
double pe_inner(const PositionalTable& table, std::size_t p, std::size_t q);

/// max over p, q, delta (all rows in range, 1 <= delta <= max_offset) of
/// |<PE(p+delta), PE(q+delta)> - <PE(p), PE(q)>|.
double shift_invariance_residual(const PositionalTable& table, std::size_t max_offset);

/// Same search restricted to p, q < pq_limit.
double shift_invariance_residual(const PositionalTable& table, std::size_t pq_limit,
                                 std::size_t max_offset);

/// CSV with header "pos,dim,value", one line per entry.
void write_csv(const PositionalTable& table, std::ostream& out);

}  // namespace helix::posenc
