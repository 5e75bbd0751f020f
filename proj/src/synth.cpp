#include "primfit/synth.hpp"

#include "primfit/metrics.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace primfit {

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double deg(double d) { return d * std::numbers::pi / 180.0; }

// Arc length of a quadratic Bezier, by dense sampling.
double curve_length(const BezierState& s) {
  const Eigen::MatrixX3d p = sample_centerline(s, 512);
  return (p.bottomRows(511) - p.topRows(511)).rowwise().norm().sum();
}

}  // namespace

CameraModel default_camera() { return {300.0, 300.0, 160.0, 120.0, 320, 240}; }

Mask hard_silhouette(const TriangleMesh& mesh, const CameraModel& cam) {
  const Matrix s = render_silhouette(mesh, cam, kHardSigma);
  return (s.array() > 0.5).cast<std::uint8_t>();
}

Mask flip_noise(const Mask& mask, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("flip noise rate must be in [0, 1]");
  if (rate == 0.0) return mask;
  std::mt19937_64 rng = make_rng(seed, 11);
  std::bernoulli_distribution flip(rate);
  Mask out = mask;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      if (flip(rng)) out(i, j) = static_cast<std::uint8_t>(1 - out(i, j));
    }
  }
  return out;
}

Eigen::VectorXd taper_radius(int rings, double base, double tip) {
  return Eigen::VectorXd::LinSpaced(rings, base, tip);
}

BezierState random_soft_target(std::uint64_t seed, int rings) {
  std::mt19937_64 rng = make_rng(seed, 21);
  const double length = 0.200;
  const double heading = deg(uniform(rng, -25.0, 25.0));
  const double bend = uniform(rng, 0.15, 0.35) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
  const double lean = uniform(rng, -0.08, 0.08);  // tip depth change over length

  BezierState s;
  s.radius = taper_radius(rings);
  const Eigen::Vector3d c0(-0.09, uniform(rng, -0.03, 0.03), 0.5);
  const Eigen::Vector3d dir(std::cos(heading), std::sin(heading), 0.0);
  const Eigen::Vector3d perp(-std::sin(heading), std::cos(heading), 0.0);
  // Build with unit chord, then scale so the arc is `length` long.
  const Eigen::Vector3d c1 = 0.5 * dir + bend * perp + Eigen::Vector3d(0, 0, 0.5 * lean);
  const Eigen::Vector3d c2 = dir + Eigen::Vector3d(0, 0, lean);
  s.control.row(0).setZero();
  s.control.row(1) = c1.transpose();
  s.control.row(2) = c2.transpose();
  s.control *= length / curve_length(s);
  s.control.rowwise() += c0.transpose();
  return s;
}

RobotModel default_robot() {
  RobotModel robot;
  const DHParams dhs[3] = {{0.0, std::numbers::pi / 2, 0.30, 0.0},
                           {0.30, 0.0, 0.12, 0.0},
                           {0.25, 0.0, 0.0, 0.0}};
  const double radii[3] = {0.045, 0.035, 0.028};
  for (int n = 0; n < 3; ++n) {
    const double len = std::hypot(dhs[n].a, dhs[n].d);
    robot.links.push_back({dhs[n], Cylinder{radii[n], len, 16}, default_attach(dhs[n])});
  }
  return robot;
}

Eigen::VectorXd random_joints(const RobotModel& robot, std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed, 31);
  Eigen::VectorXd q(static_cast<Eigen::Index>(robot.links.size()));
  // Reference: shoulder raised, elbow bent, so no link is collinear with the next.
  const double ref[3] = {0.0, deg(40.0), deg(-70.0)};
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const double r = i < 3 ? ref[i] : 0.0;
    q(i) = r + deg(uniform(rng, -30.0, 30.0));
  }
  return q;
}

PoseSE3 random_pose_target(const RobotModel& robot, const Eigen::VectorXd& joints,
                           const CameraModel& cam, std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed, 41);
  const VertexOffsets zero = zero_offsets(robot);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    // Base z axis roughly along camera -y (upright), facing the camera at a random yaw.
    const Eigen::Matrix3d upright =
        Eigen::AngleAxisd(-std::numbers::pi / 2, Eigen::Vector3d::UnitX()).toRotationMatrix();
    const Eigen::Matrix3d r =
        Eigen::AngleAxisd(deg(uniform(rng, -20, 20)), Eigen::Vector3d::UnitZ()).toRotationMatrix() *
        Eigen::AngleAxisd(deg(uniform(rng, -20, 20)), Eigen::Vector3d::UnitX()).toRotationMatrix() *
        upright *
        Eigen::AngleAxisd(deg(uniform(rng, -60, 60)), Eigen::Vector3d::UnitZ()).toRotationMatrix();
    PoseSE3 pose;
    pose.rotation = rotation_log(r);
    pose.translation = Eigen::Vector3d(uniform(rng, -0.2, 0.1), uniform(rng, 0.0, 0.25),
                                       uniform(rng, 1.6, 2.2));
    const TriangleMesh mesh = assemble_robot_mesh(robot, joints, zero, pose);
    bool inside = true;
    for (Eigen::Index i = 0; i < mesh.vertices.rows() && inside; ++i) {
      const auto uv = project_point(cam, mesh.vertices.row(i).transpose());
      inside = uv && uv->x() > 4 && uv->x() < cam.width - 4 && uv->y() > 4 &&
               uv->y() < cam.height - 4;
    }
    if (inside) return pose;
  }
  throw NumericalError("random_pose_target: robot does not fit in the image");
}

SynthFrame synth_soft(const BezierState& state, const CameraModel& cam, double noise,
                      std::uint64_t seed, int rings, int ring_segments, int centerline_samples) {
  state.validate(rings);
  SynthFrame f;
  f.camera = cam;
  f.mask = flip_noise(hard_silhouette(build_tube_mesh(state, rings, ring_segments), cam), noise, seed);
  f.truth.curve = state;
  f.truth.centerline_3d = sample_centerline(state, centerline_samples);
  f.truth.centerline_2d.resize(centerline_samples, 2);
  for (int i = 0; i < centerline_samples; ++i) {
    const auto uv = project_point(cam, f.truth.centerline_3d.row(i).transpose());
    if (!uv) throw ValidationError("synth_soft: curve crosses the near plane");
    f.truth.centerline_2d.row(i) = uv->transpose();
  }
  return f;
}

SynthFrame synth_rigid(const RobotModel& robot, const Eigen::VectorXd& joints,
                       const PoseSE3& pose, const CameraModel& cam, double noise,
                       std::uint64_t seed) {
  SynthFrame f;
  f.camera = cam;
  f.joints = joints;
  const TriangleMesh mesh = assemble_robot_mesh(robot, joints, zero_offsets(robot), pose);
  f.mask = flip_noise(hard_silhouette(mesh, cam), noise, seed);
  f.truth.pose = pose;
  f.truth.end_effector = end_effector(robot, joints, pose);
  const auto uv = project_point(cam, f.truth.end_effector);
  if (!uv) throw ValidationError("synth_rigid: end effector behind the camera");
  f.truth.end_effector_2d = *uv;
  return f;
}

}  // namespace primfit
