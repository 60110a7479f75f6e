#include "helix/analysis/helix_fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace helix::analysis {

std::string to_string(CurveShape shape) {
  switch (shape) {
    case CurveShape::helix: return "helix";
    case CurveShape::closed_curve: return "closed curve, not helix";
    case CurveShape::irregular: return "irregular";
    case CurveShape::degenerate: return "degenerate, not helix";
  }
  return "?";
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("pearson: inputs must be nonempty and equal length");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  const double scale_a = std::max(1.0, std::abs(ma));
  const double scale_b = std::max(1.0, std::abs(mb));
  if (saa <= 1e-24 * n * scale_a * scale_a || sbb <= 1e-24 * n * scale_b * scale_b) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

bool fit_circle(const std::vector<double>& x, const std::vector<double>& y, double center[2], double& radius) {
  const std::size_t n = x.size();
  if (n < 3 || y.size() != n) return false;
  // Work in centred, unit-scale coordinates so the rank test is scale free.
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s = std::max({s, std::abs(x[i] - mx), std::abs(y[i] - my)});
  if (s < 1e-9) return false;
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (x[i] - mx) / s;
    const double v = (y[i] - my) / s;
    a(static_cast<Eigen::Index>(i), 0) = u;
    a(static_cast<Eigen::Index>(i), 1) = v;
    a(static_cast<Eigen::Index>(i), 2) = 1.0;
    rhs(static_cast<Eigen::Index>(i)) = -(u * u + v * v);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-9);
  if (qr.rank() < 3) return false;
  const Eigen::Vector3d sol = qr.solve(rhs);
  const double cu = -0.5 * sol(0);
  const double cv = -0.5 * sol(1);
  const double r2 = cu * cu + cv * cv - sol(2);
  if (!(r2 > 0.0) || !std::isfinite(r2)) return false;
  center[0] = mx + s * cu;
  center[1] = my + s * cv;
  radius = s * std::sqrt(r2);
  return radius >= 1e-9;
}

namespace {

std::vector<double> column(const Matrix& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, c);
  return out;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

struct Candidate {
  bool ok = false;
  HelixFit fit;
};

Candidate try_axis(const Matrix& p, std::size_t axis, const std::vector<double>& index) {
  Candidate c;
  c.fit.axis = axis;
  const auto a = column(p, axis);
  const auto u = column(p, axis == 0 ? 1 : 0);
  const auto v = column(p, axis == 2 ? 1 : 2);
  c.fit.axis_linearity = std::abs(pearson(a, index));
  c.fit.axis_step = slope(index, a);
  if (!fit_circle(u, v, c.fit.center, c.fit.radius)) return c;
  c.ok = true;
  double ss = 0.0;
  std::vector<double> theta(u.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double du = u[i] - c.fit.center[0];
    const double dv = v[i] - c.fit.center[1];
    const double dev = std::hypot(du, dv) - c.fit.radius;
    ss += dev * dev;
    const double raw = std::atan2(dv, du);
    theta[i] = i == 0 ? raw : theta[i - 1] + std::remainder(raw - prev, 2.0 * std::numbers::pi);
    prev = raw;
  }
  c.fit.residual_ratio = std::sqrt(ss / static_cast<double>(u.size())) / c.fit.radius;
  c.fit.sweep = std::abs(theta.back() - theta.front());
  c.fit.pitch = slope(theta, a);
  return c;
}

}  // namespace

HelixFit helix_fit(const Matrix& pca3, const HelixThresholds& thresholds) {
  if (pca3.cols() != 3) throw std::invalid_argument("helix_fit: expected 3 columns, got " + std::to_string(pca3.cols()));
  if (pca3.rows() < 8) throw std::invalid_argument("helix_fit: need at least 8 positions, got " + std::to_string(pca3.rows()));
  std::vector<double> index(pca3.rows());
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = static_cast<double>(i);

  std::vector<Candidate> cands;
  for (std::size_t axis = 0; axis < 3; ++axis) cands.push_back(try_axis(pca3, axis, index));
  std::size_t primary = 0;
  for (std::size_t axis = 1; axis < 3; ++axis)
    if (cands[axis].fit.axis_linearity > cands[primary].fit.axis_linearity) primary = axis;

  const Candidate* best = cands[primary].ok ? &cands[primary] : nullptr;
  if (!best) {
    for (const auto& c : cands)
      if (c.ok && (!best || c.fit.residual_ratio < best->fit.residual_ratio)) best = &c;
  }
  if (!best) {
    HelixFit out = cands[primary].fit;
    out.shape = CurveShape::degenerate;
    out.radius = 0.0;
    return out;
  }
  HelixFit out = best->fit;
  if (out.residual_ratio < thresholds.max_residual_ratio)
    out.shape = out.axis_linearity > thresholds.min_axis_linearity ? CurveShape::helix : CurveShape::closed_curve;
  else
    out.shape = CurveShape::irregular;
  return out;
}

namespace {

double cross(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

bool on_segment(double px, double py, double qx, double qy, double rx, double ry) {
  return std::min(px, qx) <= rx && rx <= std::max(px, qx) && std::min(py, qy) <= ry && ry <= std::max(py, qy);
}

bool segments_meet(const Matrix& p, std::size_t i, std::size_t j) {
  const double ax = p(i, 0), ay = p(i, 1), bx = p(i + 1, 0), by = p(i + 1, 1);
  const double cx = p(j, 0), cy = p(j, 1), dx = p(j + 1, 0), dy = p(j + 1, 1);
  const double d1 = cross(dx - cx, dy - cy, ax - cx, ay - cy);
  const double d2 = cross(dx - cx, dy - cy, bx - cx, by - cy);
  const double d3 = cross(bx - ax, by - ay, cx - ax, cy - ay);
  const double d4 = cross(bx - ax, by - ay, dx - ax, dy - ay);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_segment(cx, cy, dx, dy, ax, ay)) return true;
  if (d2 == 0 && on_segment(cx, cy, dx, dy, bx, by)) return true;
  if (d3 == 0 && on_segment(ax, ay, bx, by, cx, cy)) return true;
  if (d4 == 0 && on_segment(ax, ay, bx, by, dx, dy)) return true;
  return false;
}

}  // namespace

bool polyline_self_intersects(const Matrix& points) {
  if (points.cols() != 2) throw std::invalid_argument("polyline_self_intersects: expected 2 columns");
  const std::size_t n = points.rows();
  if (n < 4) return false;
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = i + 2; j + 1 < n; ++j)
      if (segments_meet(points, i, j)) return true;
  return false;
}

double endpoint_gap_ratio(const Matrix& points) {
  if (points.cols() != 2 || points.rows() < 2) throw std::invalid_argument("endpoint_gap_ratio: expected n×2 with n >= 2");
  double lo[2] = {points(0, 0), points(0, 1)};
  double hi[2] = {lo[0], lo[1]};
  for (std::size_t r = 0; r < points.rows(); ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      lo[c] = std::min(lo[c], points(r, c));
      hi[c] = std::max(hi[c], points(r, c));
    }
  const double extent = std::max(hi[0] - lo[0], hi[1] - lo[1]);
  if (extent <= 0.0) return 0.0;
  const std::size_t last = points.rows() - 1;
  return std::hypot(points(last, 0) - points(0, 0), points(last, 1) - points(0, 1)) / extent;
}

}  // namespace helix::analysis
