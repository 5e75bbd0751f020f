#pragma once

// Serial-chain manipulator built from primitive link meshes.
//
// Camera-frame vertex of link n:  v_c = T_cb * T_bn(q) * attach_n * (v_prim + v_offset).
// T_bn uses classic Denavit-Hartenberg matrices
//   A = Rot_z(theta) Trans_z(d) Trans_x(a) Rot_x(alpha),  theta = q + theta_offset.

#include "primfit/autodiff.hpp"
#include "primfit/geometry.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace primfit {

using Transform = Eigen::Matrix4d;

struct DHParams {
  double a = 0.0;
  double alpha = 0.0;
  double d = 0.0;
  double theta_offset = 0.0;
};

/// Axis-aligned box centered at the origin; depth runs along z.
struct Box {
  double width = 0.0;   // x
  double height = 0.0;  // y
  double depth = 0.0;   // z
};

/// Cylinder centered at the origin, axis along z.
struct Cylinder {
  double radius = 0.0;
  double length = 0.0;
  int segments = 16;
};

using Primitive = std::variant<Box, Cylinder>;

struct DHLink {
  DHParams dh;
  Primitive primitive;
  Transform attach = Transform::Identity();
};

struct RobotModel {
  std::vector<DHLink> links;
};

/// Per-link vertex displacements, one row per primitive vertex.
using VertexOffsets = std::vector<Vertices>;

/// Axis-angle rotation and translation of the robot base in the camera frame.
struct PoseSE3 {
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> skew(const Vec3<Scalar>& w) {
  Eigen::Matrix<Scalar, 3, 3> k;
  k << Scalar(0), -w.z(), w.y(), w.z(), Scalar(0), -w.x(), -w.y(), w.x(), Scalar(0);
  return k;
}

/// Rodrigues exponential; second-order Taylor branch below |w| = 1e-8.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rodrigues(const Vec3<Scalar>& w) {
  using std::cos;
  using std::sin;
  const Scalar theta = w.norm();
  const Eigen::Matrix<Scalar, 3, 3> k = skew(w);
  const Eigen::Matrix<Scalar, 3, 3> eye = Eigen::Matrix<Scalar, 3, 3>::Identity();
  if (theta < Scalar(1e-8)) return eye + k + Scalar(0.5) * k * k;
  return eye + (sin(theta) / theta) * k + ((Scalar(1) - cos(theta)) / (theta * theta)) * k * k;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 4, 4> se3_exp(const Vec3<Scalar>& rotation, const Vec3<Scalar>& translation) {
  Eigen::Matrix<Scalar, 4, 4> m = Eigen::Matrix<Scalar, 4, 4>::Identity();
  m.template topLeftCorner<3, 3>() = rodrigues(rotation);
  m.template topRightCorner<3, 1>() = translation;
  return m;
}

inline Transform se3_exp(const PoseSE3& pose) { return se3_exp<double>(pose.rotation, pose.translation); }

/// Rotation vector of a rotation matrix (inverse of rodrigues), angle in [0, pi].
Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r);

template <typename Scalar>
Eigen::Matrix<Scalar, 4, 4> dh_matrix(Scalar a, Scalar alpha, Scalar d, Scalar theta) {
  using std::cos;
  using std::sin;
  const Scalar ct = cos(theta), st = sin(theta), ca = cos(alpha), sa = sin(alpha);
  Eigen::Matrix<Scalar, 4, 4> m;
  m << ct, -st * ca, st * sa, a * ct,  //
      st, ct * ca, -ct * sa, a * st,   //
      Scalar(0), sa, ca, d,            //
      Scalar(0), Scalar(0), Scalar(0), Scalar(1);
  return m;
}

/// Cumulative base-to-link transforms T_b1 ... T_bn.
std::vector<Transform> dh_forward(const std::vector<DHLink>& links, const Eigen::VectorXd& joints);

/// Watertight, outward-wound mesh of a primitive in its own frame.
TriangleMesh primitive_mesh(const Primitive& shape);

TriangleMesh apply_offsets(const TriangleMesh& mesh, const Vertices& offsets);
Var apply_offsets(const TriangleMesh& mesh, const Var& offsets);

/// Placement of a primitive halfway along the segment from the previous DH
/// origin to this one, long axis along that segment.
Transform default_attach(const DHParams& dh);

bool is_rigid_transform(const Transform& t, double tol = 1e-10);

/// Zero offsets with the right cardinality for every link.
VertexOffsets zero_offsets(const RobotModel& robot);

/// Vertex count per link; stable for a given model.
std::vector<Eigen::Index> link_vertex_counts(const RobotModel& robot);

TriangleMesh assemble_robot_mesh(const RobotModel& robot, const Eigen::VectorXd& joints,
                                 const VertexOffsets& offsets, const PoseSE3& pose);

/// Applies rotation exp([w]x) to every row of `points` (N x 3); `w` is 1 x 3.
Var rotate_rows(const Var& points, const Var& w);

/// Tape version. `rotation` and `translation` are 1 x 3, `offsets[n]` is
/// (vertices of link n) x 3.
DiffMesh assemble_robot_mesh(const RobotModel& robot, const Eigen::VectorXd& joints,
                             const std::vector<Var>& offsets, const Var& rotation,
                             const Var& translation);

/// Origin of the last DH frame, mapped by the base pose.
Eigen::Vector3d end_effector(const RobotModel& robot, const Eigen::VectorXd& joints,
                             const PoseSE3& pose);

/// JSON robot description; unknown keys are rejected.
RobotModel parse_robot_description(const std::string& text);
RobotModel load_robot_description(const std::string& path);
std::string robot_description_json(const RobotModel& robot);

}  // namespace primfit
