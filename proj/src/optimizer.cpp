#include "primfit/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

namespace primfit {

namespace {

constexpr double kDivergenceLoss = 1e12;
constexpr int kMaxHalvings = 3;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr int kMaxInitSamples = 100;
constexpr double kMinCoverage = 0.01;
constexpr double kMinRadius = 1e-4;  // meters

bool all_finite(const Matrix& m) { return m.allFinite(); }

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

bool in_view(const TriangleMesh& mesh, const CameraModel& cam) {
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    const auto uv = project_point(cam, mesh.vertices.row(i).transpose());
    if (!uv || uv->x() < 0 || uv->y() < 0 || uv->x() > cam.width || uv->y() > cam.height) {
      return false;
    }
  }
  return true;
}

double coverage(const Matrix& silhouette) {
  return static_cast<double>((silhouette.array() > 0.5).count()) /
         static_cast<double>(silhouette.size());
}

}  // namespace

void OptimConfig::validate() const {
  if (iterations < 0) throw ValidationError("iterations must be >= 0");
  if (!(lr_state > 0) || !(lr_verts > 0)) throw ValidationError("learning rates must be positive");
  if (!(sigma > 0)) throw ValidationError("sigma must be positive");
  if (restarts < 1) throw ValidationError("restarts must be >= 1");
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace,
                     const std::string& second_term) {
  os << "restart,iteration,L,L_mask," << second_term << ",L_app,wall_ms\n";
  for (const TraceRow& r : trace) {
    const double second = second_term == "L_dist" ? r.dist : r.keypoint;
    os << r.restart << ',' << r.iteration << ',' << std::setprecision(17) << r.loss << ','
       << r.mask << ',' << second << ',' << r.app << ',' << std::setprecision(6) << r.wall_ms
       << '\n';
  }
}

DescentResult descend(const Objective& objective, std::vector<ParamBlock> init,
                      const OptimConfig& config, int restart_index) {
  config.validate();
  const std::size_t nb = init.size();
  std::vector<Matrix> theta(nb), m1(nb), m2(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    theta[b] = init[b].value;
    m1[b] = Matrix::Zero(theta[b].rows(), theta[b].cols());
    m2[b] = m1[b];
  }
  double lr[2] = {config.lr_state, config.lr_verts};
  const auto rate = [&](std::size_t b) { return lr[init[b].group == ParamGroup::kState ? 0 : 1]; };

  DescentResult out;
  out.best = theta;
  int adam_t = 0;
  for (int it = 0; it < config.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(nb);
    for (const Matrix& m : theta) leaves.push_back(tape.leaf(m));
    const Evaluation ev = objective(tape, leaves);
    const double loss = ev.loss.total.scalar();
    if (!std::isfinite(loss)) {
      throw EstimationAborted("non-finite loss at iteration " + std::to_string(it), it, out.best);
    }
    if (loss > kDivergenceLoss) {
      if (out.lr_halvings == kMaxHalvings) {
        throw EstimationAborted("loss diverged at iteration " + std::to_string(it), it, out.best);
      }
      ++out.lr_halvings;
      lr[0] *= 0.5;
      lr[1] *= 0.5;
      theta = out.best;
      for (std::size_t b = 0; b < nb; ++b) {
        m1[b].setZero();
        m2[b].setZero();
      }
      adam_t = 0;
      continue;
    }
    tape.backward(ev.loss.total);
    for (std::size_t b = 0; b < nb; ++b) {
      if (!all_finite(leaves[b].grad())) {
        throw EstimationAborted("non-finite gradient at iteration " + std::to_string(it), it,
                                theta);
      }
    }
    if (ev.loss.behind_camera > 0) ++out.behind_camera_iterations;
    if (loss < out.best_loss) {
      out.best_loss = loss;
      out.best = theta;
      out.best_iteration = it;
    }
    if (config.record_renders) out.renders.push_back(ev.silhouette.value());

    ++adam_t;
    for (std::size_t b = 0; b < nb; ++b) {
      const Matrix& g = leaves[b].grad();
      if (config.rule == UpdateRule::kGradientDescent) {
        theta[b] -= rate(b) * g;
      } else {
        m1[b] = kAdamBeta1 * m1[b] + (1.0 - kAdamBeta1) * g;
        m2[b] = kAdamBeta2 * m2[b] + (1.0 - kAdamBeta2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(kAdamBeta1, adam_t);
        const double c2 = 1.0 - std::pow(kAdamBeta2, adam_t);
        theta[b].array() -= rate(b) * (m1[b].array() / c1) /
                            ((m2[b].array() / c2).sqrt() + kAdamEps);
      }
    }
    TraceRow row{restart_index, it,           loss,          ev.loss.mask, ev.loss.keypoint,
                 ev.loss.dist,  ev.loss.app,  out.best_loss, 0.0};
    if (config.record_timing) {
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count();
    }
    out.trace.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Soft arm

namespace {

Evaluation soft_objective(const SoftShapeProblem& p, const std::vector<Var>& leaves, double sigma,
                          const Eigen::Vector3d& base) {
  Tape& tape = leaves[0].tape();
  Var control;
  if (p.fix_base) {
    Matrix c0 = base.transpose();
    const Var parts[] = {tape.constant(c0), leaves[0] * p.length_unit};
    control = concat_rows(parts);
  } else {
    control = leaves[0] * p.length_unit;
  }
  const Var radius = clamp_min(leaves[1] * p.length_unit, kMinRadius);
  const DiffMesh mesh = build_tube_mesh(control, radius, p.rings, p.ring_segments);
  const Var s = render_silhouette(mesh, p.camera, sigma);
  std::vector<Keypoint> keypoints = p.keypoints;
  if (p.pairing == KeypointPairing::kProjectedArc && !keypoints.empty()) {
    std::vector<double> fractions;
    for (const Keypoint& k : keypoints) fractions.push_back(k.s);
    const std::vector<double> s_arc =
        projected_arc_parameters(control.value(), p.camera, fractions);
    for (std::size_t i = 0; i < keypoints.size(); ++i) keypoints[i].s = s_arc[i];
  }
  return {shape_loss(s, p.mask, control, p.camera, keypoints, p.weights), s};
}

std::vector<ParamBlock> soft_blocks(const SoftShapeProblem& p, const BezierState& st) {
  Matrix control = st.control / p.length_unit;
  if (p.fix_base) control = Matrix(control.bottomRows(2));
  return {{control, ParamGroup::kState}, {st.radius / p.length_unit, ParamGroup::kVerts}};
}

BezierState soft_state(const SoftShapeProblem& p, const std::vector<Matrix>& blocks,
                       const Eigen::Vector3d& base) {
  BezierState st;
  if (p.fix_base) {
    st.control.row(0) = base.transpose();
    st.control.bottomRows(2) = blocks[0] * p.length_unit;
  } else {
    st.control = blocks[0] * p.length_unit;
  }
  st.radius = (blocks[1] * p.length_unit).col(0).cwiseMax(kMinRadius);
  return st;
}

}  // namespace

void SoftShapeProblem::validate() const {
  camera.validate();
  init.validate(rings);
  if (mask.rows() != camera.height || mask.cols() != camera.width) {
    throw ValidationError("reference mask size differs from the camera image size");
  }
  if (ring_segments < 3) throw ValidationError("ring_segments must be >= 3");
  if (!(length_unit > 0)) throw ValidationError("length_unit must be positive");
  weights.validate();
}

SoftShapeResult estimate(const SoftShapeProblem& problem, const OptimConfig& config) {
  problem.validate();
  config.validate();
  const Eigen::Vector3d base = problem.init.c(0);
  const Objective objective = [&](Tape&, const std::vector<Var>& leaves) {
    return soft_objective(problem, leaves, config.sigma, base);
  };
  SoftShapeResult out;
  out.state = problem.init;
  out.no_iterations = config.iterations == 0;
  for (int r = 0; r < config.restarts; ++r) {
    BezierState start = problem.init;
    if (r > 0) {
      SoftInitOptions opt;
      opt.radius = problem.init.radius;
      if (problem.fix_base) opt.base = base;
      opt.rings = problem.rings;
      opt.ring_segments = problem.ring_segments;
      opt.sigma = config.sigma;
      start = random_soft_init(problem.camera, config.seed * 7919 + static_cast<std::uint64_t>(r),
                               opt);
    }
    DescentResult d = descend(objective, soft_blocks(problem, start), config, r);
    out.trace.insert(out.trace.end(), d.trace.begin(), d.trace.end());
    out.behind_camera_iterations += d.behind_camera_iterations;
    if (config.record_renders) {
      out.renders.insert(out.renders.end(), d.renders.begin(), d.renders.end());
    }
    if (d.best_loss < out.best_loss) {
      out.best_loss = d.best_loss;
      out.state = soft_state(problem, d.best, base);
      out.best_restart = r;
    }
  }
  return out;
}

double evaluate_loss(const SoftShapeProblem& problem, const BezierState& state, double sigma) {
  Tape tape;
  const std::vector<ParamBlock> blocks = soft_blocks(problem, state);
  std::vector<Var> leaves;
  for (const ParamBlock& b : blocks) leaves.push_back(tape.leaf(b.value));
  return soft_objective(problem, leaves, sigma, state.c(0)).loss.total.scalar();
}

BezierState random_soft_init(const CameraModel& cam, std::uint64_t seed,
                             const SoftInitOptions& options) {
  cam.validate();
  if (options.radius.size() != options.rings) {
    throw ValidationError("random_soft_init: radius profile must have one entry per ring");
  }
  std::mt19937_64 rng = make_rng(seed, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto sample_point = [&] {
    const double z = options.min_depth + unit(rng) * (options.max_depth - options.min_depth);
    // Inscribed box: 90% of the image extent, centered on the principal point.
    const double u = cam.width * (0.05 + 0.9 * unit(rng));
    const double v = cam.height * (0.05 + 0.9 * unit(rng));
    return Eigen::Vector3d((u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z);
  };
  for (int attempt = 0; attempt < kMaxInitSamples; ++attempt) {
    BezierState st;
    st.radius = options.radius;
    const Eigen::Vector3d c0 = options.base ? *options.base : sample_point();
    const Eigen::Vector3d c2 = sample_point();
    const double span = (c2 - c0).norm();
    Eigen::Vector3d jitter(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5);
    const Eigen::Vector3d c1 = 0.5 * (c0 + c2) + 0.5 * span * jitter;
    st.control.row(0) = c0.transpose();
    st.control.row(1) = c1.transpose();
    st.control.row(2) = c2.transpose();
    if (c1.z() < options.min_depth || c1.z() > options.max_depth) continue;
    const TriangleMesh mesh = build_tube_mesh(st, options.rings, options.ring_segments);
    if (!in_view(mesh, cam)) continue;
    if (coverage(render_silhouette(mesh, cam, options.sigma)) >= kMinCoverage) return st;
  }
  throw NumericalError("random_soft_init: no sample covered 1% of the image in " +
                       std::to_string(kMaxInitSamples) + " tries");
}

// ---------------------------------------------------------------------------
// Rigid manipulator

namespace {

Evaluation rigid_objective(const RigidPoseProblem& p, const std::vector<Var>& leaves,
                           double sigma) {
  const std::vector<Var> offsets(leaves.begin() + 2, leaves.end());
  const DiffMesh mesh = assemble_robot_mesh(p.robot, p.joints, offsets, leaves[0], leaves[1]);
  const Var s = render_silhouette(mesh, p.camera, sigma);
  return {pose_loss(s, p.mask, p.distance, p.weights), s};
}

std::vector<ParamBlock> rigid_blocks(const PoseSE3& pose, const VertexOffsets& offsets) {
  std::vector<ParamBlock> blocks;
  blocks.push_back({pose.rotation.transpose(), ParamGroup::kState});
  blocks.push_back({pose.translation.transpose(), ParamGroup::kState});
  for (const Vertices& o : offsets) blocks.push_back({Matrix(o), ParamGroup::kVerts});
  return blocks;
}

VertexOffsets problem_offsets(const RigidPoseProblem& p) {
  return p.offsets.empty() ? zero_offsets(p.robot) : p.offsets;
}

}  // namespace

void RigidPoseProblem::validate() const {
  camera.validate();
  if (robot.links.empty()) throw ValidationError("robot has no links");
  if (joints.size() != static_cast<Eigen::Index>(robot.links.size())) {
    throw ValidationError("joint vector length differs from the number of links");
  }
  if (mask.rows() != camera.height || mask.cols() != camera.width) {
    throw ValidationError("reference mask size differs from the camera image size");
  }
  if (distance.rows() != mask.rows() || distance.cols() != mask.cols()) {
    throw ValidationError("distance map size differs from the mask size");
  }
  if (!offsets.empty()) {
    const auto counts = link_vertex_counts(robot);
    if (offsets.size() != counts.size()) throw ValidationError("one offset block per link required");
    for (std::size_t n = 0; n < counts.size(); ++n) {
      if (offsets[n].rows() != counts[n]) throw ValidationError("offset block size mismatch");
    }
  }
  weights.validate();
}

RigidPoseResult estimate(const RigidPoseProblem& problem, const OptimConfig& config) {
  problem.validate();
  config.validate();
  const Objective objective = [&](Tape&, const std::vector<Var>& leaves) {
    return rigid_objective(problem, leaves, config.sigma);
  };
  const VertexOffsets offsets0 = problem_offsets(problem);
  RigidPoseResult out;
  out.pose = problem.init;
  out.offsets = offsets0;
  out.no_iterations = config.iterations == 0;
  for (int r = 0; r < config.restarts; ++r) {
    PoseSE3 start = problem.init;
    if (r > 0) {
      RigidInitOptions opt;
      opt.sigma = config.sigma;
      start = random_pose_init(problem.robot, problem.joints, problem.camera,
                               config.seed * 7919 + static_cast<std::uint64_t>(r), opt);
    }
    DescentResult d = descend(objective, rigid_blocks(start, offsets0), config, r);
    out.trace.insert(out.trace.end(), d.trace.begin(), d.trace.end());
    if (config.record_renders) {
      out.renders.insert(out.renders.end(), d.renders.begin(), d.renders.end());
    }
    if (d.best_loss < out.best_loss) {
      out.best_loss = d.best_loss;
      out.best_restart = r;
      out.pose.rotation = d.best[0].row(0).transpose();
      out.pose.translation = d.best[1].row(0).transpose();
      out.offsets.clear();
      for (std::size_t b = 2; b < d.best.size(); ++b) out.offsets.emplace_back(d.best[b]);
    }
  }
  return out;
}

double evaluate_loss(const RigidPoseProblem& problem, const PoseSE3& pose,
                     const VertexOffsets& offsets, double sigma) {
  Tape tape;
  std::vector<Var> leaves;
  for (const ParamBlock& b : rigid_blocks(pose, offsets)) leaves.push_back(tape.leaf(b.value));
  return rigid_objective(problem, leaves, sigma).loss.total.scalar();
}

PoseSE3 random_pose_init(const RobotModel& robot, const Eigen::VectorXd& joints,
                         const CameraModel& cam, std::uint64_t seed,
                         const RigidInitOptions& options) {
  cam.validate();
  std::mt19937_64 rng = make_rng(seed, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const VertexOffsets zero = zero_offsets(robot);
  for (int attempt = 0; attempt < kMaxInitSamples; ++attempt) {
    PoseSE3 pose;
    const double z = options.min_depth + unit(rng) * (options.max_depth - options.min_depth);
    const double u = cam.width * unit(rng);
    const double v = cam.height * unit(rng);
    pose.translation = Eigen::Vector3d((u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z);
    // Uniform unit quaternion (Shoemake).
    const double a = unit(rng), b = 2.0 * M_PI * unit(rng), c = 2.0 * M_PI * unit(rng);
    const Eigen::Quaterniond q(std::sqrt(a) * std::cos(c), std::sqrt(1.0 - a) * std::sin(b),
                               std::sqrt(1.0 - a) * std::cos(b), std::sqrt(a) * std::sin(c));
    pose.rotation = rotation_log(q.toRotationMatrix());
    const TriangleMesh mesh = assemble_robot_mesh(robot, joints, zero, pose);
    if (!in_view(mesh, cam)) continue;
    if (coverage(render_silhouette(mesh, cam, options.sigma)) >= kMinCoverage) return pose;
  }
  throw NumericalError("random_pose_init: no sample covered 1% of the image in " +
                       std::to_string(kMaxInitSamples) + " tries");
}

}  // namespace primfit
