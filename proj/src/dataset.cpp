#include "primfit/dataset.hpp"

#include "primfit/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace primfit {

using nlohmann::json;

namespace {

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string(what) + ": " + e.what());
  }
}

// Wraps nlohmann type/key errors as validation errors.
template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ValidationError(std::string(what) + ": " + e.what());
  }
}

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <int C>
json rows_json(const Eigen::Matrix<double, Eigen::Dynamic, C>& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

Eigen::VectorXd json_vec(const json& j, Eigen::Index expected = -1) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  if (expected >= 0 && v.size() != expected) {
    throw ValidationError("expected " + std::to_string(expected) + " numbers, got " +
                          std::to_string(v.size()));
  }
  return v;
}

template <int C>
Eigen::Matrix<double, Eigen::Dynamic, C> json_rows(const json& j) {
  Eigen::Matrix<double, Eigen::Dynamic, C> m(static_cast<Eigen::Index>(j.size()), C);
  for (std::size_t i = 0; i < j.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = json_vec(j.at(i), C).transpose();
  return m;
}

json soft_json(const BezierState& s) {
  json control = json::array();
  for (int i = 0; i < 3; ++i) control.push_back(vec_json(s.c(i)));
  return {{"control", control}, {"radius", vec_json(s.radius)}};
}

BezierState soft_from(const json& j) {
  BezierState s;
  const json& control = j.at("control");
  if (control.size() != 3) throw ValidationError("soft state: need three control points");
  for (int i = 0; i < 3; ++i) s.control.row(i) = json_vec(control.at(static_cast<std::size_t>(i)), 3).transpose();
  s.radius = json_vec(j.at("radius"));
  if (s.radius.size() == 0 || (s.radius.array() <= 0).any()) {
    throw ValidationError("soft state: radii must be positive");
  }
  return s;
}

json pose_json(const PoseSE3& p) {
  return {{"rotation", vec_json(p.rotation)}, {"translation", vec_json(p.translation)}};
}

PoseSE3 pose_from(const json& j) {
  return {json_vec(j.at("rotation"), 3), json_vec(j.at("translation"), 3)};
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << text;
}

CameraModel parse_camera(const std::string& text) {
  const json j = parse_json(text, "camera");
  CameraModel cam = guarded("camera", [&] {
    return CameraModel{j.at("fx").get<double>(), j.at("fy").get<double>(),
                       j.at("cx").get<double>(), j.at("cy").get<double>(),
                       j.at("width").get<int>(), j.at("height").get<int>()};
  });
  cam.validate();
  return cam;
}

CameraModel load_camera(const std::string& path) { return parse_camera(read_text_file(path)); }

std::string camera_json(const CameraModel& cam) {
  const json j = {{"fx", cam.fx}, {"fy", cam.fy},       {"cx", cam.cx},
                  {"cy", cam.cy}, {"width", cam.width}, {"height", cam.height}};
  return j.dump(2) + "\n";
}

BezierState parse_soft_state(const std::string& text) {
  const json j = parse_json(text, "soft state");
  return guarded("soft state", [&] { return soft_from(j); });
}

BezierState load_soft_state(const std::string& path) { return parse_soft_state(read_text_file(path)); }

std::string soft_state_json(const BezierState& state) { return soft_json(state).dump(2) + "\n"; }

RigidState parse_rigid_state(const std::string& text) {
  const json j = parse_json(text, "rigid state");
  return guarded("rigid state", [&] {
    RigidState s;
    s.pose = pose_from(j);
    if (j.contains("offsets")) {
      for (const json& link : j.at("offsets")) s.offsets.push_back(json_rows<3>(link));
    }
    return s;
  });
}

RigidState load_rigid_state(const std::string& path) { return parse_rigid_state(read_text_file(path)); }

std::string rigid_state_json(const RigidState& state) {
  json j = pose_json(state.pose);
  json offs = json::array();
  for (const Vertices& o : state.offsets) offs.push_back(rows_json<3>(o));
  j["offsets"] = offs;
  return j.dump(2) + "\n";
}

GroundTruth parse_ground_truth(const std::string& text) {
  const json j = parse_json(text, "ground truth");
  return guarded("ground truth", [&] {
    GroundTruth gt;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "soft") {
      gt.curve = soft_from(j);
      if (j.contains("centerline_3d")) gt.centerline_3d = json_rows<3>(j.at("centerline_3d"));
      if (j.contains("centerline_2d")) gt.centerline_2d = json_rows<2>(j.at("centerline_2d"));
    } else if (kind == "rigid") {
      gt.pose = pose_from(j);
      gt.end_effector = json_vec(j.at("end_effector"), 3);
      gt.end_effector_2d = json_vec(j.at("end_effector_2d"), 2);
    } else {
      throw ValidationError("ground truth: kind must be \"soft\" or \"rigid\"");
    }
    return gt;
  });
}

GroundTruth load_ground_truth(const std::string& path) {
  return parse_ground_truth(read_text_file(path));
}

std::string ground_truth_json(const GroundTruth& gt) {
  json j;
  if (gt.soft()) {
    j = soft_json(*gt.curve);
    j["kind"] = "soft";
    j["centerline_3d"] = rows_json<3>(gt.centerline_3d);
    j["centerline_2d"] = rows_json<2>(gt.centerline_2d);
  } else if (gt.pose) {
    j = pose_json(*gt.pose);
    j["kind"] = "rigid";
    j["end_effector"] = vec_json(gt.end_effector);
    j["end_effector_2d"] = vec_json(gt.end_effector_2d);
  } else {
    throw ValidationError("ground truth has neither a curve nor a pose");
  }
  return j.dump(2) + "\n";
}

std::vector<Eigen::VectorXd> parse_joints(const std::string& text) {
  std::vector<Eigen::VectorXd> frames;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> q;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        q.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::logic_error&) {
        throw ValidationError("joints: bad number '" + tok + "' on line " + std::to_string(lineno));
      }
    }
    if (q.empty()) continue;
    if (!frames.empty() && static_cast<Eigen::Index>(q.size()) != frames.front().size()) {
      throw ValidationError("joints: line " + std::to_string(lineno) + " has a different joint count");
    }
    frames.push_back(Eigen::Map<Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size())));
  }
  return frames;
}

std::vector<Eigen::VectorXd> load_joints(const std::string& path) {
  return parse_joints(read_text_file(path));
}

std::string joints_text(const std::vector<Eigen::VectorXd>& frames) {
  std::ostringstream os;
  os.precision(17);
  for (const Eigen::VectorXd& q : frames) {
    for (Eigen::Index i = 0; i < q.size(); ++i) os << (i ? " " : "") << q(i);
    os << '\n';
  }
  return os.str();
}

}  // namespace primfit
