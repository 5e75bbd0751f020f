#include "primfit/cli.hpp"

#include "primfit/dataset.hpp"
#include "primfit/image_io.hpp"
#include "primfit/metrics.hpp"
#include "primfit/optimizer.hpp"
#include "primfit/synth.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace primfit {

namespace {

namespace fs = std::filesystem;

struct GlobalOptions {
  std::uint64_t seed = 0;
  int iters = -1;  // -1: per-command default
  double lr_state = -1.0;
  double lr_verts = -1.0;
  double sigma = -1.0;
  int restarts = 1;
  std::string out_dir = ".";
  std::string update = "adam";
  bool timing = false;
  bool save_renders = false;
};

OptimConfig make_config(const GlobalOptions& g, int iters, double lr_state, double lr_verts) {
  OptimConfig c;
  c.iterations = g.iters >= 0 ? g.iters : iters;
  c.lr_state = g.lr_state > 0 ? g.lr_state : lr_state;
  c.lr_verts = g.lr_verts > 0 ? g.lr_verts : lr_verts;
  if (g.sigma > 0) c.sigma = g.sigma;
  c.seed = g.seed;
  c.restarts = g.restarts;
  c.rule = g.update == "gd" ? UpdateRule::kGradientDescent : UpdateRule::kAdam;
  c.record_timing = g.timing;
  c.record_renders = g.save_renders;
  return c;
}

fs::path out_path(const GlobalOptions& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

void write_renders(const GlobalOptions& g, const std::vector<Matrix>& renders) {
  for (std::size_t i = 0; i < renders.size(); ++i) {
    std::ostringstream name;
    name << "render_" << std::setw(4) << std::setfill('0') << i << ".pgm";
    write_gray(out_path(g, name.str()).string(), renders[i]);
  }
}

void write_csv(const fs::path& path, const std::vector<TraceRow>& trace, const std::string& term) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  write_trace_csv(out, trace, term);
}

Mask load_reference(const std::string& mask_path, const std::string& image_path,
                    const std::vector<double>& hsv) {
  if (!mask_path.empty()) return read_mask(mask_path);
  if (image_path.empty()) throw ValidationError("either --mask or --image is required");
  HsvRange range;
  if (!hsv.empty()) {
    if (hsv.size() != 6) throw ValidationError("--hsv takes six numbers");
    range = {hsv[0], hsv[1], hsv[2], hsv[3], hsv[4], hsv[5]};
  }
  return color_segment(read_rgb(image_path), range);
}

void check_mask_size(const Mask& mask, const CameraModel& cam) {
  if (mask.rows() != cam.height || mask.cols() != cam.width) {
    throw ValidationError("mask is " + std::to_string(mask.cols()) + "x" +
                          std::to_string(mask.rows()) + " but the camera image is " +
                          std::to_string(cam.width) + "x" + std::to_string(cam.height));
  }
}

// --- reconstruct-shape ------------------------------------------------------

struct ShapeArgs {
  std::string mask, image, camera, init;
  std::vector<double> hsv;
  int keypoints = 4;
  std::vector<double> base_hint;
  std::string base_side = "left";
  bool fix_base = false;
  int rings = 100;
  int segments = 40;
  std::string pairing = "arc";
};

int run_reconstruct(const GlobalOptions& g, const ShapeArgs& a) {
  const CameraModel cam = load_camera(a.camera);
  const Mask mask = load_reference(a.mask, a.image, a.hsv);
  check_mask_size(mask, cam);
  OptimConfig config = make_config(g, 200, 0.2, 0.2);

  SoftShapeProblem p;
  p.camera = cam;
  p.mask = mask.cast<double>();
  p.rings = a.rings;
  p.ring_segments = a.segments;
  p.fix_base = a.fix_base;
  p.pairing = a.pairing == "param" ? KeypointPairing::kParameter : KeypointPairing::kProjectedArc;
  if (!a.init.empty()) {
    p.init = load_soft_state(a.init);
  } else {
    if (a.fix_base) throw ValidationError("--fix-base needs --init to supply the base point");
    SoftInitOptions opt;
    opt.radius = taper_radius(a.rings);
    opt.rings = a.rings;
    opt.ring_segments = a.segments;
    opt.sigma = config.sigma;
    p.init = random_soft_init(cam, g.seed, opt);
  }
  if (a.keypoints > 0) {
    const Mask skel = skeletonize(mask);
    Centerline cl;
    if (a.base_hint.size() == 2) {
      cl = order_centerline(skel, Eigen::Vector2d(a.base_hint[0], a.base_hint[1]));
    } else if (a.fix_base) {
      const auto uv = project_point(cam, p.init.c(0));
      if (!uv) throw ValidationError("initial base point is behind the camera");
      cl = order_centerline(skel, *uv);
    } else {
      const BorderSide side = a.base_side == "right"    ? BorderSide::kRight
                              : a.base_side == "top"    ? BorderSide::kTop
                              : a.base_side == "bottom" ? BorderSide::kBottom
                                                        : BorderSide::kLeft;
      cl = order_centerline(skel, side);
    }
    p.keypoints = extract_keypoints(extend_to_boundary(cl, mask), a.keypoints);
  } else {
    p.weights.keypoint = 0.0;
  }

  const SoftShapeResult r = estimate(p, config);
  write_text_file(out_path(g, "state.json").string(), soft_state_json(r.state));
  write_csv(out_path(g, "loss.csv"), r.trace, "L_keypoint");
  write_gray(out_path(g, "silhouette.pgm").string(),
             render_silhouette(build_tube_mesh(r.state, a.rings, a.segments), cam, config.sigma));
  write_renders(g, r.renders);
  if (r.no_iterations) std::cerr << "warning: no iterations run; state is the initialization\n";
  if (r.behind_camera_iterations > 0) {
    std::cerr << "warning: keypoints fell behind the camera in " << r.behind_camera_iterations
              << " iterations\n";
  }
  std::cout << "best loss " << std::setprecision(10) << r.best_loss << "\n";
  return 0;
}

// --- estimate-pose ----------------------------------------------------------

struct PoseArgs {
  std::string mask, image, robot, joints, camera, init;
  std::vector<double> hsv;
  int frame = 0;
  double gamma = 100.0;
};

int run_estimate_pose(const GlobalOptions& g, const PoseArgs& a) {
  const CameraModel cam = load_camera(a.camera);
  const Mask mask = load_reference(a.mask, a.image, a.hsv);
  check_mask_size(mask, cam);
  const RobotModel robot = load_robot_description(a.robot);
  const std::vector<Eigen::VectorXd> frames = load_joints(a.joints);
  if (a.frame < 0 || a.frame >= static_cast<int>(frames.size())) {
    throw ValidationError("joints file has no frame " + std::to_string(a.frame));
  }
  OptimConfig config = make_config(g, 500, 1e-2, 1e-4);

  RigidPoseProblem p;
  p.robot = robot;
  p.joints = frames[static_cast<std::size_t>(a.frame)];
  p.camera = cam;
  p.mask = mask.cast<double>();
  p.distance = distance_map(mask, a.gamma);
  if (!a.init.empty()) {
    const RigidState s = load_rigid_state(a.init);
    p.init = s.pose;
    p.offsets = s.offsets;
  } else {
    RigidInitOptions opt;
    opt.sigma = config.sigma;
    p.init = random_pose_init(robot, p.joints, cam, g.seed, opt);
  }
  const RigidPoseResult r = estimate(p, config);
  write_text_file(out_path(g, "pose.json").string(), rigid_state_json({r.pose, r.offsets}));
  write_csv(out_path(g, "loss.csv"), r.trace, "L_dist");
  write_gray(out_path(g, "silhouette.pgm").string(),
             render_silhouette(assemble_robot_mesh(robot, p.joints, r.offsets, r.pose), cam,
                               config.sigma));
  write_renders(g, r.renders);
  if (r.no_iterations) std::cerr << "warning: no iterations run; pose is the initialization\n";
  std::cout << "best loss " << std::setprecision(10) << r.best_loss << "\n";
  return 0;
}

// --- make-synthetic ---------------------------------------------------------

struct SynthArgs {
  std::string kind = "soft";
  int count = 1;
  double noise = 0.0;
};

int run_make_synthetic(const GlobalOptions& g, const SynthArgs& a) {
  if (a.count < 1) throw ValidationError("--count must be >= 1");
  const CameraModel cam = default_camera();
  write_text_file(out_path(g, "camera.json").string(), camera_json(cam));
  const RobotModel robot = default_robot();
  std::vector<Eigen::VectorXd> joints;
  if (a.kind == "rigid") write_text_file(out_path(g, "robot.json").string(), robot_description_json(robot));
  for (int i = 0; i < a.count; ++i) {
    const std::uint64_t seed = g.seed + static_cast<std::uint64_t>(i);
    std::ostringstream name;
    name << "frame_" << std::setw(3) << std::setfill('0') << i;
    SynthFrame f;
    if (a.kind == "soft") {
      f = synth_soft(random_soft_target(seed), cam, a.noise, seed);
    } else if (a.kind == "rigid") {
      const Eigen::VectorXd q = random_joints(robot, seed);
      f = synth_rigid(robot, q, random_pose_target(robot, q, cam, seed), cam, a.noise, seed);
      joints.push_back(q);
    } else {
      throw ValidationError("--kind must be soft or rigid");
    }
    write_mask(out_path(g, name.str() + "_mask.pgm").string(), f.mask);
    write_text_file(out_path(g, name.str() + "_gt.json").string(), ground_truth_json(f.truth));
  }
  if (a.kind == "rigid") write_text_file(out_path(g, "joints.txt").string(), joints_text(joints));
  std::cout << "wrote " << a.count << " " << a.kind << " frames to " << g.out_dir << "\n";
  return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> gt, est;
  std::string camera, robot, joints;
  std::vector<double> thresholds_2d{5, 10, 20, 40};
  std::vector<double> thresholds_3d{20, 50, 100, 200};
};

int run_eval(const GlobalOptions& g, const EvalArgs& a) {
  if (a.gt.size() != a.est.size() || a.gt.empty()) {
    throw ValidationError("--gt and --est must be given the same, nonzero number of times");
  }
  const CameraModel cam = load_camera(a.camera);
  std::optional<RobotModel> robot;
  std::vector<Eigen::VectorXd> joints;
  std::vector<FrameMetrics> frames;
  for (std::size_t i = 0; i < a.gt.size(); ++i) {
    const GroundTruth gt = load_ground_truth(a.gt[i]);
    FrameMetrics m;
    m.frame = fs::path(a.gt[i]).stem().string();
    if (gt.soft()) {
      const CenterlineError e =
          centerline_error(load_soft_state(a.est[i]), gt.centerline_3d, gt.centerline_2d, cam);
      m.e2d = e.e2d;
      m.e3d = e.e3d;
    } else {
      if (!robot) {
        if (a.robot.empty() || a.joints.empty()) {
          throw ValidationError("rigid ground truth needs --robot and --joints");
        }
        robot = load_robot_description(a.robot);
        joints = load_joints(a.joints);
      }
      if (i >= joints.size()) throw ValidationError("joints file has fewer frames than --gt files");
      const RigidState est = load_rigid_state(a.est[i]);
      const Eigen::Vector3d p = end_effector(*robot, joints[i], est.pose);
      const auto uv = project_point(cam, p);
      if (!uv) throw ValidationError("estimated end effector is behind the camera");
      m.e2d = (*uv - gt.end_effector_2d).norm();
      m.e3d = 1000.0 * (p - gt.end_effector).norm();
    }
    frames.push_back(m);
  }
  const MetricReport report = summarize(frames, a.thresholds_2d, a.thresholds_3d);
  std::ofstream out(out_path(g, "report.csv"));
  write_report_csv(out, report);
  write_report_csv(std::cout, report);
  return 0;
}

// --- render-debug -----------------------------------------------------------

struct RenderArgs {
  std::string state, camera, robot, joints, output = "render.pgm";
  int frame = 0;
  int rings = 100;
  int segments = 40;
};

int run_render_debug(const GlobalOptions& g, const RenderArgs& a) {
  const CameraModel cam = load_camera(a.camera);
  const double sigma = g.sigma > 0 ? g.sigma : OptimConfig{}.sigma;
  TriangleMesh mesh;
  if (a.robot.empty()) {
    mesh = build_tube_mesh(load_soft_state(a.state), a.rings, a.segments);
  } else {
    const RobotModel robot = load_robot_description(a.robot);
    const auto frames = load_joints(a.joints);
    if (a.frame < 0 || a.frame >= static_cast<int>(frames.size())) {
      throw ValidationError("joints file has no frame " + std::to_string(a.frame));
    }
    const RigidState s = load_rigid_state(a.state);
    mesh = assemble_robot_mesh(robot, frames[static_cast<std::size_t>(a.frame)],
                               s.offsets.empty() ? zero_offsets(robot) : s.offsets, s.pose);
  }
  write_gray(out_path(g, a.output).string(), render_silhouette(mesh, cam, sigma));
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Robot state estimation by differentiable silhouette rendering", "primfit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file with option values");

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--iters", g.iters, "Iterations per restart")->check(CLI::NonNegativeNumber);
  app.add_option("--lr-state", g.lr_state, "Learning rate of the state parameters")->check(CLI::PositiveNumber);
  app.add_option("--lr-verts", g.lr_verts, "Learning rate of the vertex parameters")->check(CLI::PositiveNumber);
  app.add_option("--sigma", g.sigma, "Render blur, px^2")->check(CLI::PositiveNumber);
  app.add_option("--restarts", g.restarts, "Random restarts")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--update", g.update, "Update rule")->check(CLI::IsMember({"adam", "gd"}));
  app.add_flag("--timing", g.timing, "Record wall-clock time in the loss CSV");
  app.add_flag("--save-renders", g.save_renders, "Write every iteration's silhouette");

  ShapeArgs sa;
  auto* shape = app.add_subcommand("reconstruct-shape", "Fit a Bezier arm to a mask");
  shape->add_option("--mask", sa.mask, "Binary graymap");
  shape->add_option("--image", sa.image, "RGB pixmap, segmented with --hsv");
  shape->add_option("--hsv", sa.hsv, "h_lo h_hi s_lo s_hi v_lo v_hi")->expected(6);
  shape->add_option("--camera", sa.camera, "Camera JSON")->required();
  shape->add_option("--init", sa.init, "Initial state JSON");
  shape->add_option("--keypoints", sa.keypoints, "Centerline keypoints, 0 for mask only")->check(CLI::NonNegativeNumber);
  shape->add_option("--base-hint", sa.base_hint, "Pixel near the arm base (u v)")->expected(2);
  shape->add_option("--base-side", sa.base_side, "Image border the base touches")
      ->check(CLI::IsMember({"left", "right", "top", "bottom"}));
  shape->add_flag("--fix-base", sa.fix_base, "Hold c0 at its initial value");
  shape->add_option("--rings", sa.rings, "Cross sections along the arm")->check(CLI::Range(2, 100000));
  shape->add_option("--segments", sa.segments, "Vertices per cross section")->check(CLI::Range(3, 100000));
  shape->add_option("--pairing", sa.pairing, "Keypoint pairing")->check(CLI::IsMember({"arc", "param"}));

  PoseArgs pa;
  auto* pose = app.add_subcommand("estimate-pose", "Fit a manipulator base pose to a mask");
  pose->add_option("--mask", pa.mask, "Binary graymap");
  pose->add_option("--image", pa.image, "RGB pixmap, segmented with --hsv");
  pose->add_option("--hsv", pa.hsv, "h_lo h_hi s_lo s_hi v_lo v_hi")->expected(6);
  pose->add_option("--robot", pa.robot, "Robot description JSON")->required();
  pose->add_option("--joints", pa.joints, "Joints file")->required();
  pose->add_option("--frame", pa.frame, "Row of the joints file");
  pose->add_option("--camera", pa.camera, "Camera JSON")->required();
  pose->add_option("--init", pa.init, "Initial pose JSON");
  pose->add_option("--gamma", pa.gamma, "Distance map discount")->check(CLI::PositiveNumber);

  SynthArgs ya;
  auto* synth = app.add_subcommand("make-synthetic", "Render frames of known states");
  synth->add_option("--kind", ya.kind, "soft or rigid")->check(CLI::IsMember({"soft", "rigid"}));
  synth->add_option("--count", ya.count, "Number of frames");
  synth->add_option("--noise", ya.noise, "Pixel flip probability")->check(CLI::Range(0.0, 1.0));

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Compare estimates with ground truth");
  eval->add_option("--gt", ea.gt, "Ground truth JSON (repeatable)")->required();
  eval->add_option("--est", ea.est, "Estimate JSON (repeatable, same order)")->required();
  eval->add_option("--camera", ea.camera, "Camera JSON")->required();
  eval->add_option("--robot", ea.robot, "Robot description, rigid frames");
  eval->add_option("--joints", ea.joints, "Joints file, rigid frames");
  eval->add_option("--thresholds-2d", ea.thresholds_2d, "PCK thresholds, px");
  eval->add_option("--thresholds-3d", ea.thresholds_3d, "PCK thresholds, mm");

  RenderArgs ra;
  auto* render = app.add_subcommand("render-debug", "Render a state file");
  render->add_option("--state", ra.state, "Soft or rigid state JSON")->required();
  render->add_option("--camera", ra.camera, "Camera JSON")->required();
  render->add_option("--robot", ra.robot, "Robot description; selects a rigid state");
  render->add_option("--joints", ra.joints, "Joints file");
  render->add_option("--frame", ra.frame, "Row of the joints file");
  render->add_option("--rings", ra.rings, "Cross sections");
  render->add_option("--segments", ra.segments, "Vertices per cross section");
  render->add_option("--output", ra.output, "File name inside --out-dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*shape) return run_reconstruct(g, sa);
    if (*pose) return run_estimate_pose(g, pa);
    if (*synth) return run_make_synthetic(g, ya);
    if (*eval) return run_eval(g, ea);
    if (*render) return run_render_debug(g, ra);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace primfit
