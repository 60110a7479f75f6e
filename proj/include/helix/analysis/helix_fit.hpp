#pragma once

#include <string>
#include <vector>

#include "helix/numerics/matrix.hpp"

namespace helix::analysis {

using numerics::Matrix;

enum class CurveShape { helix, closed_curve, irregular, degenerate };

std::string to_string(CurveShape shape);

struct HelixThresholds {
  double max_residual_ratio = 0.25;
  double min_axis_linearity = 0.9;
};

/// Circle in the plane of two PCA coordinates plus a drift along the third.
struct HelixFit {
  /// Column of the input used as the axis (0..2).
  std::size_t axis = 0;
  /// Axis displacement per radian of unwrapped angle.
  double pitch = 0.0;
  /// Least-squares axis displacement per position step.
  double axis_step = 0.0;
  double center[2] = {0.0, 0.0};
  double radius = 0.0;
  /// RMS radial deviation over the radius.
  double residual_ratio = 0.0;
  /// |Pearson r| between the axis coordinate and the position index.
  double axis_linearity = 0.0;
  /// Total unwrapped angle swept, in radians.
  double sweep = 0.0;
  CurveShape shape = CurveShape::degenerate;
};

/// pca3 holds one row per position in order. The axis is the coordinate most
/// correlated with position; if the circle through the other two is
/// degenerate, the remaining axes are tried and the best circle kept.
/// Requires at least 8 rows and exactly 3 columns.
HelixFit helix_fit(const Matrix& pca3, const HelixThresholds& thresholds = {});

/// Algebraic (Kåsa) least-squares circle through 2-D points. Returns false when
/// the points are collinear or the radius is below 1e-9.
bool fit_circle(const std::vector<double>& x, const std::vector<double>& y, double center[2], double& radius);

/// Pearson correlation; 0 when either input is constant.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Whether any two non-adjacent segments of the polyline through the rows
/// of an n×2 matrix cross or touch.
bool polyline_self_intersects(const Matrix& points);

/// Distance between the first and last point over the largest extent of the
/// bounding box. Zero for a closed loop.
double endpoint_gap_ratio(const Matrix& points);

}  // namespace helix::analysis
