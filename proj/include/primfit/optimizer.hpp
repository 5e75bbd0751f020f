#pragma once

// Render-and-compare estimation loop: rebuild the mesh, render, score, keep
// the best-scoring state, step every parameter block from the same loss.

#include "primfit/errors.hpp"
#include "primfit/geometry.hpp"
#include "primfit/kinematics.hpp"
#include "primfit/losses.hpp"
#include "primfit/renderer.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace primfit {

enum class UpdateRule { kGradientDescent, kAdam };

struct OptimConfig {
  int iterations = 200;
  double lr_state = 0.2;
  double lr_verts = 0.2;
  double sigma = 0.05;  // px^2
  std::uint64_t seed = 0;
  UpdateRule rule = UpdateRule::kAdam;
  int restarts = 1;
  bool record_renders = false;
  bool record_timing = false;  // otherwise wall_ms is written as 0

  void validate() const;
};

struct TraceRow {
  int restart = 0;
  int iteration = 0;
  double loss = 0.0;
  double mask = 0.0;
  double keypoint = 0.0;
  double dist = 0.0;
  double app = 0.0;
  double best = 0.0;  // L_min after this iteration
  double wall_ms = 0.0;
};

/// `second_term` selects the fourth column: "L_keypoint" or "L_dist".
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace,
                     const std::string& second_term);

/// Thrown when the loss or a gradient stops being finite, or the divergence
/// guard runs out of retries.
class EstimationAborted : public NumericalError {
 public:
  EstimationAborted(const std::string& what, int iteration, std::vector<Matrix> last_state)
      : NumericalError(what), iteration_(iteration), last_state_(std::move(last_state)) {}

  [[nodiscard]] int iteration() const { return iteration_; }
  /// Parameter blocks of the last state whose loss was finite.
  [[nodiscard]] const std::vector<Matrix>& last_state() const { return last_state_; }

 private:
  int iteration_;
  std::vector<Matrix> last_state_;
};

// ---------------------------------------------------------------------------
// Generic loop over named parameter blocks.

enum class ParamGroup { kState, kVerts };

struct ParamBlock {
  Matrix value;
  ParamGroup group = ParamGroup::kState;
};

struct Evaluation {
  LossBreakdown loss;
  Var silhouette;
};

/// Builds the loss on `tape` from one leaf per block.
using Objective = std::function<Evaluation(Tape& tape, const std::vector<Var>& leaves)>;

struct DescentResult {
  std::vector<Matrix> best;  // blocks at the best iteration; the init if none ran
  double best_loss = std::numeric_limits<double>::infinity();
  int best_iteration = -1;
  std::vector<TraceRow> trace;
  std::vector<Matrix> renders;
  int lr_halvings = 0;
  int behind_camera_iterations = 0;
};

DescentResult descend(const Objective& objective, std::vector<ParamBlock> init,
                      const OptimConfig& config, int restart_index = 0);

// ---------------------------------------------------------------------------
// Soft continuum arm.

struct SoftShapeProblem {
  BezierState init;
  CameraModel camera;
  Matrix mask;                      // H x W, {0, 1}
  std::vector<Keypoint> keypoints;  // may be empty
  LossWeights weights = LossWeights::shape_defaults();
  int rings = 100;
  int ring_segments = 40;
  double length_unit = 0.01;  // optimizer works in centimeters
  bool fix_base = false;      // c0 held at its initial value
  KeypointPairing pairing = KeypointPairing::kProjectedArc;

  void validate() const;
};

struct SoftShapeResult {
  BezierState state;  // best-loss control points and radii
  double best_loss = std::numeric_limits<double>::infinity();
  bool no_iterations = false;
  int best_restart = 0;
  std::vector<TraceRow> trace;
  std::vector<Matrix> renders;
  int behind_camera_iterations = 0;
};

SoftShapeResult estimate(const SoftShapeProblem& problem, const OptimConfig& config);

/// Loss of a fixed state, built exactly as in the loop.
double evaluate_loss(const SoftShapeProblem& problem, const BezierState& state, double sigma);

struct SoftInitOptions {
  double min_depth = 0.2;
  double max_depth = 2.0;
  Eigen::VectorXd radius;                  // ring radii to use
  std::optional<Eigen::Vector3d> base;     // fixed c0
  int rings = 100;
  int ring_segments = 40;
  double sigma = 0.05;
};

/// Control points in a frustum-inscribed box, c1 near the c0-c2 midpoint.
/// Resampled until the whole mesh projects inside the image and at least 1%
/// of pixels render positive.
BezierState random_soft_init(const CameraModel& cam, std::uint64_t seed,
                             const SoftInitOptions& options);

// ---------------------------------------------------------------------------
// Rigid manipulator.

struct RigidPoseProblem {
  RobotModel robot;
  Eigen::VectorXd joints;
  PoseSE3 init;
  VertexOffsets offsets;  // empty means all zero
  CameraModel camera;
  Matrix mask;
  Matrix distance;  // distance_map(mask, gamma)
  LossWeights weights = LossWeights::pose_defaults();

  void validate() const;
};

struct RigidPoseResult {
  PoseSE3 pose;
  VertexOffsets offsets;
  double best_loss = std::numeric_limits<double>::infinity();
  bool no_iterations = false;
  int best_restart = 0;
  std::vector<TraceRow> trace;
  std::vector<Matrix> renders;
};

RigidPoseResult estimate(const RigidPoseProblem& problem, const OptimConfig& config);

double evaluate_loss(const RigidPoseProblem& problem, const PoseSE3& pose,
                     const VertexOffsets& offsets, double sigma);

struct RigidInitOptions {
  double min_depth = 0.5;
  double max_depth = 3.0;
  double sigma = 0.05;
};

/// Rotation uniform on SO(3), base origin projecting inside the image.
/// Resampled until the whole mesh projects inside the image and at least 1%
/// of pixels render positive.
PoseSE3 random_pose_init(const RobotModel& robot, const Eigen::VectorXd& joints,
                         const CameraModel& cam, std::uint64_t seed,
                         const RigidInitOptions& options = {});

}  // namespace primfit
