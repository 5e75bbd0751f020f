#include "primfit/metrics.hpp"

#include "primfit/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

namespace primfit {

namespace {

template <typename Points, typename Point>
double nearest_distance(const Points& set, const Point& p) {
  return std::sqrt((set.rowwise() - p.transpose()).rowwise().squaredNorm().minCoeff());
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

}  // namespace

Eigen::MatrixX3d sample_centerline(const BezierState& curve, int n) {
  if (n < 2) throw ValidationError("sample_centerline: need at least 2 points");
  Eigen::MatrixX3d out(n, 3);
  for (int i = 0; i < n; ++i) out.row(i) = bezier_point(curve, static_cast<double>(i) / (n - 1)).transpose();
  return out;
}

CenterlineError centerline_error(const BezierState& estimate, const Eigen::MatrixX3d& gt_3d,
                                 const Eigen::MatrixX2d& gt_2d, const CameraModel& cam,
                                 int n_points) {
  if (gt_3d.rows() == 0 && gt_2d.rows() == 0) {
    throw ValidationError("centerline_error: ground truth has no samples");
  }
  const Eigen::MatrixX3d est = sample_centerline(estimate, n_points);
  Eigen::MatrixX2d ref2 = gt_2d;
  if (ref2.rows() == 0) {
    ref2.resize(gt_3d.rows(), 2);
    for (Eigen::Index i = 0; i < gt_3d.rows(); ++i) {
      const auto uv = project_point(cam, gt_3d.row(i).transpose());
      if (!uv) throw ValidationError("centerline_error: ground-truth point behind the camera");
      ref2.row(i) = uv->transpose();
    }
  }
  CenterlineError out;
  out.e3d = std::numeric_limits<double>::quiet_NaN();
  double s2 = 0.0, s3 = 0.0;
  for (Eigen::Index i = 0; i < est.rows(); ++i) {
    const Eigen::Vector3d p = est.row(i).transpose();
    const auto uv = project_point(cam, p);
    if (!uv) throw ValidationError("centerline_error: estimated curve behind the camera");
    s2 += nearest_distance(ref2, *uv);
    if (gt_3d.rows() > 0) s3 += nearest_distance(gt_3d, p);
  }
  out.e2d = s2 / static_cast<double>(n_points);
  if (gt_3d.rows() > 0) out.e3d = 1000.0 * s3 / static_cast<double>(n_points);
  return out;
}

PckCurve pck(const std::vector<double>& errors, const std::vector<double>& thresholds) {
  if (errors.empty()) throw ValidationError("pck: no errors given");
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw ValidationError("pck: thresholds must be sorted");
  }
  PckCurve out;
  for (double t : thresholds) {
    if (!(t > 0)) throw ValidationError("pck: thresholds must be positive");
    const auto hits = std::count_if(errors.begin(), errors.end(), [t](double e) { return e <= t; });
    out.emplace_back(t, static_cast<double>(hits) / static_cast<double>(errors.size()));
  }
  return out;
}

double rotation_error_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

MetricReport summarize(std::vector<FrameMetrics> frames, const std::vector<double>& thresholds_2d,
                       const std::vector<double>& thresholds_3d) {
  MetricReport r;
  std::vector<double> e2, e3;
  for (const FrameMetrics& f : frames) {
    if (std::isfinite(f.e2d)) e2.push_back(f.e2d);
    if (std::isfinite(f.e3d)) e3.push_back(f.e3d);
  }
  std::tie(r.mean_2d, r.std_2d) = mean_std(e2);
  std::tie(r.mean_3d, r.std_3d) = mean_std(e3);
  if (!e2.empty() && !thresholds_2d.empty()) r.pck_2d = pck(e2, thresholds_2d);
  if (!e3.empty() && !thresholds_3d.empty()) r.pck_3d = pck(e3, thresholds_3d);
  r.frames = std::move(frames);
  return r;
}

void write_report_csv(std::ostream& os, const MetricReport& report) {
  os << "frame,e2d_px,e3d_mm\n" << std::setprecision(10);
  for (const FrameMetrics& f : report.frames) os << f.frame << ',' << f.e2d << ',' << f.e3d << '\n';
  os << "mean," << report.mean_2d << ',' << report.mean_3d << '\n';
  os << "std," << report.std_2d << ',' << report.std_3d << '\n';
  for (const auto& [t, frac] : report.pck_2d) os << "pck2d@" << t << ',' << frac << ",\n";
  for (const auto& [t, frac] : report.pck_3d) os << "pck3d@" << t << ",," << frac << '\n';
}

}  // namespace primfit
