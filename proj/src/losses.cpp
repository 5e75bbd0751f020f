#include "primfit/losses.hpp"

#include "primfit/errors.hpp"
#include "primfit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace primfit {

namespace {

void check_same_size(const Var& s, const Matrix& ref, const char* what) {
  if (s.rows() != ref.rows() || s.cols() != ref.cols()) {
    throw ValidationError(std::string(what) + ": image is " + std::to_string(s.rows()) + "x" +
                          std::to_string(s.cols()) + ", reference is " +
                          std::to_string(ref.rows()) + "x" + std::to_string(ref.cols()));
  }
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {mask, keypoint, dist, app}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("loss weights must be nonnegative");
  }
  if (mask + keypoint + dist + app <= 0.0) throw ValidationError("at least one loss weight must be positive");
}

Var mask_loss(const Var& silhouette, const Matrix& mask) {
  check_same_size(silhouette, mask, "mask_loss");
  const Var diff = silhouette - silhouette.tape().constant(mask);
  return sum(diff * diff);
}

Var dist_loss(const Var& silhouette, const Matrix& distance) {
  check_same_size(silhouette, distance, "dist_loss");
  return sum(silhouette * silhouette.tape().constant(distance));
}

Var appearance_loss(const Var& silhouette, const Matrix& mask) {
  check_same_size(silhouette, mask, "appearance_loss");
  return abs(sum(silhouette) - mask.sum());
}

KeypointTerm keypoint_loss(const Var& control, const CameraModel& cam,
                           const std::vector<Keypoint>& keypoints) {
  if (control.rows() != 3 || control.cols() != 3) {
    throw ValidationError("keypoint_loss: control points must be 3 x 3");
  }
  if (keypoints.empty()) throw ValidationError("keypoint_loss: no keypoints");
  Tape& tape = control.tape();
  const auto k = static_cast<Eigen::Index>(keypoints.size());
  Matrix basis(k, 3);
  Matrix target(k, 2);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Keypoint& kp = keypoints[static_cast<std::size_t>(i)];
    check_curve_parameter(kp.s);
    basis.row(i) = bezier_basis(kp.s).row(0);
    target.row(i) = kp.pixel.transpose();
  }
  const Projection proj = project(cam, matmul(tape.constant(basis), control));
  const Var dist = norm_rows(proj.pixels - tape.constant(target));

  KeypointTerm out;
  Matrix keep = Matrix::Ones(k, 1);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (proj.clipped[static_cast<std::size_t>(i)]) {
      keep(i, 0) = 0.0;
      ++out.behind_camera;
    }
  }
  out.value = sum(dist * tape.constant(keep)) + kBehindCameraPenalty * out.behind_camera;
  return out;
}

std::vector<double> projected_arc_parameters(const Eigen::Matrix3d& control, const CameraModel& cam,
                                             const std::vector<double>& fractions, int samples) {
  if (samples < 2) throw ValidationError("projected_arc_parameters: need at least 2 samples");
  std::vector<double> arc(static_cast<std::size_t>(samples), 0.0);
  std::optional<Eigen::Vector2d> prev;
  for (int k = 0; k < samples; ++k) {
    const double s = static_cast<double>(k) / (samples - 1);
    const auto uv = project_point(cam, bezier_point<double>(control.row(0).transpose(),
                                                            control.row(1).transpose(),
                                                            control.row(2).transpose(), s));
    if (!uv) return fractions;
    if (k > 0) arc[static_cast<std::size_t>(k)] = arc[static_cast<std::size_t>(k) - 1] + (*uv - *prev).norm();
    prev = uv;
  }
  const double total = arc.back();
  if (!(total > 0)) return fractions;
  std::vector<double> out;
  out.reserve(fractions.size());
  for (double f : fractions) {
    const double target = f * total;
    const auto it = std::lower_bound(arc.begin(), arc.end(), target);
    if (it == arc.begin()) {
      out.push_back(0.0);
      continue;
    }
    if (it == arc.end()) {
      out.push_back(1.0);
      continue;
    }
    const auto k = static_cast<std::size_t>(it - arc.begin());
    const double w = (target - arc[k - 1]) / (arc[k] - arc[k - 1]);
    out.push_back((static_cast<double>(k - 1) + w) / (samples - 1));
  }
  return out;
}

LossBreakdown shape_loss(const Var& silhouette, const Matrix& mask, const Var& control,
                         const CameraModel& cam, const std::vector<Keypoint>& keypoints,
                         const LossWeights& w) {
  w.validate();
  LossBreakdown out;
  const Var lm = mask_loss(silhouette, mask);
  out.mask = lm.scalar();
  out.total = w.mask * lm;
  if (w.keypoint > 0.0 && !keypoints.empty()) {
    const KeypointTerm kt = keypoint_loss(control, cam, keypoints);
    out.keypoint = kt.value.scalar();
    out.behind_camera = kt.behind_camera;
    out.total = out.total + w.keypoint * kt.value;
  }
  return out;
}

LossBreakdown pose_loss(const Var& silhouette, const Matrix& mask, const Matrix& distance,
                        const LossWeights& w) {
  w.validate();
  LossBreakdown out;
  const Var lm = mask_loss(silhouette, mask);
  const Var ld = dist_loss(silhouette, distance);
  const Var la = appearance_loss(silhouette, mask);
  out.mask = lm.scalar();
  out.dist = ld.scalar();
  out.app = la.scalar();
  out.total = w.mask * lm + w.dist * ld + w.app * la;
  return out;
}

}  // namespace primfit
