#include "primfit/kinematics.hpp"

#include "primfit/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace primfit {

using nlohmann::json;

Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

std::vector<Transform> dh_forward(const std::vector<DHLink>& links, const Eigen::VectorXd& joints) {
  if (static_cast<std::size_t>(joints.size()) != links.size()) {
    throw ValidationError("dh_forward: " + std::to_string(joints.size()) + " joint values for " +
                          std::to_string(links.size()) + " links");
  }
  std::vector<Transform> out;
  out.reserve(links.size());
  Transform acc = Transform::Identity();
  for (std::size_t k = 0; k < links.size(); ++k) {
    const DHParams& p = links[k].dh;
    acc = acc * dh_matrix<double>(p.a, p.alpha, p.d, joints(static_cast<Eigen::Index>(k)) + p.theta_offset);
    out.push_back(acc);
  }
  return out;
}

namespace {

TriangleMesh box_mesh(const Box& b) {
  if (!(b.width > 0 && b.height > 0 && b.depth > 0)) {
    throw ValidationError("primitive: box dimensions must be positive");
  }
  TriangleMesh m;
  m.vertices.resize(8, 3);
  for (int i = 0; i < 8; ++i) {
    m.vertices.row(i) << ((i & 1) ? 0.5 : -0.5) * b.width, ((i & 2) ? 0.5 : -0.5) * b.height,
        ((i & 4) ? 0.5 : -0.5) * b.depth;
  }
  m.faces.resize(12, 3);
  m.faces << 0, 2, 1, 1, 2, 3,  // z-
      4, 5, 6, 5, 7, 6,         // z+
      0, 1, 4, 1, 5, 4,         // y-
      2, 6, 3, 3, 6, 7,         // y+
      0, 4, 2, 2, 4, 6,         // x-
      1, 3, 5, 3, 7, 5;         // x+
  return m;
}

TriangleMesh cylinder_mesh(const Cylinder& c) {
  if (!(c.radius > 0 && c.length > 0)) {
    throw ValidationError("primitive: cylinder dimensions must be positive");
  }
  if (c.segments < 3) throw ValidationError("primitive: cylinder needs at least 3 segments");
  const int n = c.segments;
  TriangleMesh m;
  m.vertices.resize(2 * n + 2, 3);
  for (int ring = 0; ring < 2; ++ring) {
    const double z = (ring == 0 ? -0.5 : 0.5) * c.length;
    for (int j = 0; j < n; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / n;
      m.vertices.row(ring * n + j) << c.radius * std::cos(phi), c.radius * std::sin(phi), z;
    }
  }
  m.vertices.row(2 * n) << 0.0, 0.0, -0.5 * c.length;
  m.vertices.row(2 * n + 1) << 0.0, 0.0, 0.5 * c.length;
  m.faces.resize(4 * n, 3);
  int k = 0;
  for (int j = 0; j < n; ++j) {
    const int a = j, b = (j + 1) % n, c2 = n + j, d = n + (j + 1) % n;
    m.faces.row(k++) << a, b, c2;
    m.faces.row(k++) << b, d, c2;
    m.faces.row(k++) << 2 * n, b, a;
    m.faces.row(k++) << 2 * n + 1, c2, d;
  }
  return m;
}

Eigen::Matrix3d rotation_taking_z_to(const Eigen::Vector3d& dir) {
  return Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitZ(), dir).toRotationMatrix();
}

}  // namespace

TriangleMesh primitive_mesh(const Primitive& shape) {
  return std::visit(
      [](const auto& s) -> TriangleMesh {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, Box>) {
          return box_mesh(s);
        } else {
          return cylinder_mesh(s);
        }
      },
      shape);
}

TriangleMesh apply_offsets(const TriangleMesh& mesh, const Vertices& offsets) {
  if (offsets.rows() != mesh.vertices.rows()) {
    throw ValidationError("apply_offsets: " + std::to_string(offsets.rows()) + " offsets for " +
                          std::to_string(mesh.vertices.rows()) + " vertices");
  }
  TriangleMesh out = mesh;
  out.vertices += offsets;
  return out;
}

Var apply_offsets(const TriangleMesh& mesh, const Var& offsets) {
  if (offsets.rows() != mesh.vertices.rows() || offsets.cols() != 3) {
    throw ValidationError("apply_offsets: " + std::to_string(offsets.rows()) + " offsets for " +
                          std::to_string(mesh.vertices.rows()) + " vertices");
  }
  return offsets.tape().constant(Matrix(mesh.vertices)) + offsets;
}

Transform default_attach(const DHParams& dh) {
  // Previous DH origin expressed in this link's frame; independent of theta.
  const Eigen::Vector3d prev(-dh.a, -dh.d * std::sin(dh.alpha), -dh.d * std::cos(dh.alpha));
  Transform t = Transform::Identity();
  const double len = prev.norm();
  if (len < 1e-12) return t;
  t.topLeftCorner<3, 3>() = rotation_taking_z_to(-prev / len);
  t.topRightCorner<3, 1>() = 0.5 * prev;
  return t;
}

bool is_rigid_transform(const Transform& t, double tol) {
  const Eigen::Matrix3d r = t.topLeftCorner<3, 3>();
  if (!((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol)) {
    return false;
  }
  if (std::abs(r.determinant() - 1.0) > tol) return false;
  return t.row(3).isApprox(Eigen::RowVector4d(0, 0, 0, 1));
}

VertexOffsets zero_offsets(const RobotModel& robot) {
  VertexOffsets out;
  for (const auto count : link_vertex_counts(robot)) out.push_back(Vertices::Zero(count, 3));
  return out;
}

std::vector<Eigen::Index> link_vertex_counts(const RobotModel& robot) {
  std::vector<Eigen::Index> out;
  for (const auto& link : robot.links) out.push_back(primitive_mesh(link.primitive).vertices.rows());
  return out;
}

namespace {

void check_offsets(const RobotModel& robot, std::size_t count) {
  if (count != robot.links.size()) {
    throw ValidationError("assemble_robot_mesh: " + std::to_string(count) +
                          " offset sets for " + std::to_string(robot.links.size()) + " links");
  }
}

}  // namespace

TriangleMesh assemble_robot_mesh(const RobotModel& robot, const Eigen::VectorXd& joints,
                                 const VertexOffsets& offsets, const PoseSE3& pose) {
  check_offsets(robot, offsets.size());
  const auto chain = dh_forward(robot.links, joints);
  const Transform cam = se3_exp(pose);
  TriangleMesh out;
  std::vector<TriangleMesh> parts;
  Eigen::Index nv = 0, nf = 0;
  for (std::size_t k = 0; k < robot.links.size(); ++k) {
    TriangleMesh m = apply_offsets(primitive_mesh(robot.links[k].primitive), offsets[k]);
    const Transform t = cam * chain[k] * robot.links[k].attach;
    m.vertices = ((m.vertices * t.topLeftCorner<3, 3>().transpose()).rowwise() +
                  t.topRightCorner<3, 1>().transpose())
                     .eval();
    nv += m.vertices.rows();
    nf += m.faces.rows();
    parts.push_back(std::move(m));
  }
  out.vertices.resize(nv, 3);
  out.faces.resize(nf, 3);
  Eigen::Index v = 0, f = 0;
  for (const auto& m : parts) {
    out.vertices.middleRows(v, m.vertices.rows()) = m.vertices;
    out.faces.middleRows(f, m.faces.rows()) = m.faces.array() + static_cast<int>(v);
    v += m.vertices.rows();
    f += m.faces.rows();
  }
  return out;
}

Var rotate_rows(const Var& points, const Var& w) {
  if (w.rows() != 1 || w.cols() != 3 || points.cols() != 3) {
    throw ValidationError("rotate_rows: expects N x 3 points and a 1 x 3 rotation vector");
  }
  const Var wxv = cross_rows(w, points);
  const double theta = w.value().norm();
  if (theta < 1e-8) return points + wxv + 0.5 * cross_rows(w, wxv);
  const Var angle = norm_rows(w);
  const Var axis = w / angle;
  const Var c = cos(angle);
  const Var kxv = cross_rows(axis, points);
  const Var kdv = dot_rows(axis, points);
  return points * c + kxv * sin(angle) + (kdv * axis) * (1.0 - c);
}

DiffMesh assemble_robot_mesh(const RobotModel& robot, const Eigen::VectorXd& joints,
                             const std::vector<Var>& offsets, const Var& rotation,
                             const Var& translation) {
  check_offsets(robot, offsets.size());
  Tape& tape = rotation.tape();
  const auto chain = dh_forward(robot.links, joints);
  std::vector<Var> parts;
  Faces faces;
  Eigen::Index nv = 0;
  for (std::size_t k = 0; k < robot.links.size(); ++k) {
    const TriangleMesh prim = primitive_mesh(robot.links[k].primitive);
    const Transform t = chain[k] * robot.links[k].attach;
    const Var local = apply_offsets(prim, offsets[k]);
    const Matrix rt = t.topLeftCorner<3, 3>().transpose();
    const Matrix tr = t.topRightCorner<3, 1>().transpose();
    parts.push_back(matmul(local, tape.constant(rt)) + tape.constant(tr));
    Faces shifted = prim.faces.array() + static_cast<int>(nv);
    Faces merged(faces.rows() + shifted.rows(), 3);
    merged << faces, shifted;
    faces = std::move(merged);
    nv += prim.vertices.rows();
  }
  const Var base = concat_rows(parts);
  return DiffMesh{rotate_rows(base, rotation) + translation, std::move(faces)};
}

Eigen::Vector3d end_effector(const RobotModel& robot, const Eigen::VectorXd& joints,
                             const PoseSE3& pose) {
  if (robot.links.empty()) return pose.translation;
  const Transform t = se3_exp(pose) * dh_forward(robot.links, joints).back();
  return t.topRightCorner<3, 1>();
}

// Robot description ---------------------------------------------------------

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw ValidationError("robot description: " + where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.contains(key)) {
      throw ValidationError("robot description: unknown key '" + key + "' in " + where);
    }
  }
}

double req_number(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj.at(key).is_number()) {
    throw ValidationError("robot description: " + where + "." + key + " must be a number");
  }
  return obj.at(key).get<double>();
}

Eigen::Vector3d req_vec3(const json& obj, const char* key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_array() || v.size() != 3) {
    throw ValidationError("robot description: " + where + "." + key + " must be 3 numbers");
  }
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

}  // namespace

RobotModel parse_robot_description(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("robot description: ") + e.what());
  }
  reject_unknown(doc, {"links"}, "root");
  if (!doc.contains("links") || !doc["links"].is_array() || doc["links"].empty()) {
    throw ValidationError("robot description: 'links' must be a non-empty array");
  }
  RobotModel robot;
  int index = 0;
  for (const json& jl : doc["links"]) {
    const std::string where = "links[" + std::to_string(index++) + "]";
    reject_unknown(jl, {"dh", "primitive", "attach"}, where);
    if (!jl.contains("dh") || !jl.contains("primitive")) {
      throw ValidationError("robot description: " + where + " needs 'dh' and 'primitive'");
    }
    DHLink link;
    const json& dh = jl["dh"];
    reject_unknown(dh, {"a", "alpha", "d", "theta_offset"}, where + ".dh");
    link.dh = {req_number(dh, "a", where + ".dh"), req_number(dh, "alpha", where + ".dh"),
               req_number(dh, "d", where + ".dh"), req_number(dh, "theta_offset", where + ".dh")};

    const json& prim = jl["primitive"];
    const std::string pw = where + ".primitive";
    if (!prim.is_object() || !prim.contains("type") || !prim["type"].is_string()) {
      throw ValidationError("robot description: " + pw + ".type missing");
    }
    const std::string type = prim["type"].get<std::string>();
    if (type == "box") {
      reject_unknown(prim, {"type", "width", "height", "depth"}, pw);
      link.primitive = Box{req_number(prim, "width", pw), req_number(prim, "height", pw),
                           req_number(prim, "depth", pw)};
    } else if (type == "cylinder") {
      reject_unknown(prim, {"type", "radius", "length", "segments"}, pw);
      Cylinder c{req_number(prim, "radius", pw), req_number(prim, "length", pw), 16};
      if (prim.contains("segments")) c.segments = prim["segments"].get<int>();
      link.primitive = c;
    } else {
      throw ValidationError("robot description: " + pw + ".type '" + type + "' unknown");
    }
    primitive_mesh(link.primitive);  // validates dimensions

    if (jl.contains("attach")) {
      const json& at = jl["attach"];
      reject_unknown(at, {"position", "axis_angle"}, where + ".attach");
      const PoseSE3 p{req_vec3(at, "axis_angle", where + ".attach"),
                      req_vec3(at, "position", where + ".attach")};
      link.attach = se3_exp(p);
    } else {
      link.attach = default_attach(link.dh);
    }
    robot.links.push_back(std::move(link));
  }
  return robot;
}

RobotModel load_robot_description(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open robot description: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_robot_description(ss.str());
}

std::string robot_description_json(const RobotModel& robot) {
  json doc;
  doc["links"] = json::array();
  for (const auto& link : robot.links) {
    json jl;
    jl["dh"] = {{"a", link.dh.a}, {"alpha", link.dh.alpha}, {"d", link.dh.d},
                {"theta_offset", link.dh.theta_offset}};
    if (const auto* b = std::get_if<Box>(&link.primitive)) {
      jl["primitive"] = {{"type", "box"}, {"width", b->width}, {"height", b->height},
                         {"depth", b->depth}};
    } else {
      const auto& c = std::get<Cylinder>(link.primitive);
      jl["primitive"] = {{"type", "cylinder"}, {"radius", c.radius}, {"length", c.length},
                         {"segments", c.segments}};
    }
    const Eigen::Vector3d w = rotation_log(link.attach.topLeftCorner<3, 3>());
    const Eigen::Vector3d p = link.attach.topRightCorner<3, 1>();
    jl["attach"] = {{"position", {p.x(), p.y(), p.z()}}, {"axis_angle", {w.x(), w.y(), w.z()}}};
    doc["links"].push_back(jl);
  }
  return doc.dump(2);
}

}  // namespace primfit
