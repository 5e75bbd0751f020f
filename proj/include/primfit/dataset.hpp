#pragma once

// File formats: camera, soft and rigid states, ground truth, joints.
// JSON except the joints file, which is one frame per line of radians.

#include "primfit/geometry.hpp"
#include "primfit/kinematics.hpp"
#include "primfit/renderer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace primfit {

CameraModel parse_camera(const std::string& text);
CameraModel load_camera(const std::string& path);
std::string camera_json(const CameraModel& cam);

/// {"control": [[x,y,z] x 3], "radius": [r_1, ..., r_rings]}
BezierState parse_soft_state(const std::string& text);
BezierState load_soft_state(const std::string& path);
std::string soft_state_json(const BezierState& state);

/// {"rotation": [3], "translation": [3], "offsets": [[[x,y,z], ...] per link]}.
/// "offsets" is optional.
struct RigidState {
  PoseSE3 pose;
  VertexOffsets offsets;
};
RigidState parse_rigid_state(const std::string& text);
RigidState load_rigid_state(const std::string& path);
std::string rigid_state_json(const RigidState& state);

/// Ground truth for one frame. Soft frames carry the curve and centerline
/// samples; rigid frames carry the base pose and end-effector position.
struct GroundTruth {
  std::optional<BezierState> curve;
  Eigen::MatrixX3d centerline_3d;
  Eigen::MatrixX2d centerline_2d;
  std::optional<PoseSE3> pose;
  Eigen::Vector3d end_effector = Eigen::Vector3d::Zero();
  Eigen::Vector2d end_effector_2d = Eigen::Vector2d::Zero();

  [[nodiscard]] bool soft() const { return curve.has_value(); }
};
GroundTruth parse_ground_truth(const std::string& text);
GroundTruth load_ground_truth(const std::string& path);
std::string ground_truth_json(const GroundTruth& gt);

/// One row per frame; blank lines and '#' comments are skipped.
std::vector<Eigen::VectorXd> parse_joints(const std::string& text);
std::vector<Eigen::VectorXd> load_joints(const std::string& path);
std::string joints_text(const std::vector<Eigen::VectorXd>& frames);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace primfit
