#pragma once

// Evaluation: centerline errors, end-effector errors and PCK curves.

#include "primfit/geometry.hpp"
#include "primfit/renderer.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace primfit {

struct CenterlineError {
  double e2d = 0.0;  // pixels
  double e3d = 0.0;  // millimeters; NaN without 3D ground truth
};

/// Samples n_points points p(i / (n_points - 1)) of `estimate` and averages
/// the distance from each to its nearest ground-truth sample. `gt_3d` is
/// M x 3 in meters and `gt_2d` is M x 2 in pixels; either may be empty, but
/// not both. Without 2D samples the 3D ones are projected.
CenterlineError centerline_error(const BezierState& estimate, const Eigen::MatrixX3d& gt_3d,
                                 const Eigen::MatrixX2d& gt_2d, const CameraModel& cam,
                                 int n_points = 100);

/// Dense samples of a curve: n x 3 points at s = i / (n - 1).
Eigen::MatrixX3d sample_centerline(const BezierState& curve, int n);

using PckCurve = std::vector<std::pair<double, double>>;  // (threshold, fraction)

/// Fraction of errors <= each threshold.
PckCurve pck(const std::vector<double>& errors, const std::vector<double>& thresholds);

/// Geodesic angle between two rotations, degrees.
double rotation_error_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

struct FrameMetrics {
  std::string frame;
  double e2d = 0.0;
  double e3d = 0.0;
};

struct MetricReport {
  std::vector<FrameMetrics> frames;
  double mean_2d = 0.0;
  double std_2d = 0.0;
  double mean_3d = 0.0;
  double std_3d = 0.0;
  PckCurve pck_2d;
  PckCurve pck_3d;
};

MetricReport summarize(std::vector<FrameMetrics> frames, const std::vector<double>& thresholds_2d,
                       const std::vector<double>& thresholds_3d);

/// Per-frame rows, then mean/std rows, then one row per PCK threshold.
void write_report_csv(std::ostream& os, const MetricReport& report);

}  // namespace primfit
