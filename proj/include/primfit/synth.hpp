#pragma once

// Self-generated test frames: hard silhouettes of known states plus ground truth.

#include "primfit/dataset.hpp"
#include "primfit/imageproc.hpp"

#include <cstdint>

namespace primfit {

constexpr double kHardSigma = 1e-2;  // px^2

/// 320 x 240, fx = fy = 300, principal point at the image center.
CameraModel default_camera();

/// Soft render at kHardSigma thresholded at 0.5.
Mask hard_silhouette(const TriangleMesh& mesh, const CameraModel& cam);

/// Flips each pixel independently with probability `rate`.
Mask flip_noise(const Mask& mask, double rate, std::uint64_t seed);

/// Radius profile tapering linearly from `base` to `tip` over `rings` rings.
Eigen::VectorXd taper_radius(int rings, double base = 0.010, double tip = 0.006);

/// Bent 200 mm arm about 0.5 m in front of the default camera, base on the
/// left of the image.
BezierState random_soft_target(std::uint64_t seed, int rings = 100);

/// Three-link chain of cylinders (column, upper arm, forearm).
RobotModel default_robot();

/// Random joints within +-60 degrees of a reference configuration.
Eigen::VectorXd random_joints(const RobotModel& robot, std::uint64_t seed);

/// Base pose that keeps the whole robot in view of `cam`, about 2 m away.
PoseSE3 random_pose_target(const RobotModel& robot, const Eigen::VectorXd& joints,
                           const CameraModel& cam, std::uint64_t seed);

struct SynthFrame {
  CameraModel camera;
  Mask mask;
  GroundTruth truth;
  Eigen::VectorXd joints;  // rigid frames only
};

/// The default 199 centerline samples include every point of a 100-point
/// evaluation, so an exact estimate scores zero.
SynthFrame synth_soft(const BezierState& state, const CameraModel& cam, double noise,
                      std::uint64_t seed, int rings = 100, int ring_segments = 40,
                      int centerline_samples = 199);

SynthFrame synth_rigid(const RobotModel& robot, const Eigen::VectorXd& joints,
                       const PoseSE3& pose, const CameraModel& cam, double noise,
                       std::uint64_t seed);

}  // namespace primfit
