#pragma once

// Silhouette, keypoint, distance and appearance objectives on the tape.
// Reference images are plain matrices with values in {0, 1}.

#include "primfit/autodiff.hpp"
#include "primfit/imageproc.hpp"
#include "primfit/renderer.hpp"

#include <vector>

namespace primfit {

/// Penalty charged for a keypoint at or behind the near plane; carries no gradient.
constexpr double kBehindCameraPenalty = 1e4;

struct LossWeights {
  double mask = 1.0;
  double keypoint = 0.0;
  double dist = 0.0;
  double app = 0.0;

  static LossWeights shape_defaults() { return {1.0, 100.0, 0.0, 0.0}; }
  static LossWeights pose_defaults() { return {1.0, 0.0, 1.0, 1.0}; }

  void validate() const;
};

/// Sum of squared pixel differences.
Var mask_loss(const Var& silhouette, const Matrix& mask);

/// Sum of S * D.
Var dist_loss(const Var& silhouette, const Matrix& distance);

/// |sum S - sum M|, zero subgradient at equality.
Var appearance_loss(const Var& silhouette, const Matrix& mask);

struct KeypointTerm {
  Var value;
  int behind_camera = 0;  // keypoints charged the constant penalty
};

/// Sum over keypoints of the pixel distance between the projected curve point
/// p(s_i) and its target. `control` is 3 x 3, rows c0..c2.
KeypointTerm keypoint_loss(const Var& control, const CameraModel& cam,
                           const std::vector<Keypoint>& keypoints);

/// How a keypoint's arc fraction picks its point on the curve.
enum class KeypointPairing {
  kParameter,      // p(s) with s = fraction
  kProjectedArc,   // the point at that fraction of the projected arc length
};

/// Curve parameters at the given fractions of the projected arc length of
/// `control`, by dense sampling. Points behind the camera keep s = fraction.
std::vector<double> projected_arc_parameters(const Eigen::Matrix3d& control, const CameraModel& cam,
                                             const std::vector<double>& fractions,
                                             int samples = 256);

/// Weighted total plus the unweighted component values.
struct LossBreakdown {
  Var total;
  double mask = 0.0;
  double keypoint = 0.0;
  double dist = 0.0;
  double app = 0.0;
  int behind_camera = 0;
};

LossBreakdown shape_loss(const Var& silhouette, const Matrix& mask, const Var& control,
                         const CameraModel& cam, const std::vector<Keypoint>& keypoints,
                         const LossWeights& w);

LossBreakdown pose_loss(const Var& silhouette, const Matrix& mask, const Matrix& distance,
                        const LossWeights& w);

}  // namespace primfit
