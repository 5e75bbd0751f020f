#include "primfit/geometry.hpp"

#include <map>
#include <numbers>
#include <ostream>
#include <utility>

namespace primfit {

void BezierState::validate(Eigen::Index rings) const {
  if (radius.size() != rings) {
    throw ValidationError("BezierState: radius profile has " + std::to_string(radius.size()) +
                          " entries, expected " + std::to_string(rings));
  }
  if ((radius.array() <= 0.0).any()) {
    throw ValidationError("BezierState: radius profile must be positive");
  }
}

Eigen::Vector3d bezier_point(const BezierState& curve, double s) {
  check_curve_parameter(s);
  return bezier_point<double>(curve.c(0), curve.c(1), curve.c(2), s);
}

CurveDerivatives<double> bezier_derivatives(const BezierState& curve, double s) {
  check_curve_parameter(s);
  return bezier_derivatives<double>(curve.c(0), curve.c(1), curve.c(2), s);
}

Frame<double> frenet_frame(const BezierState& curve, double s) {
  const auto d = bezier_derivatives(curve, s);
  return frenet_frame<double>(d.first, d.second);
}

double interpolate_radius(const Eigen::VectorXd& radius, double s) {
  check_curve_parameter(s);
  if (radius.size() == 0) throw ValidationError("interpolate_radius: empty profile");
  if (radius.size() == 1) return radius(0);
  const double x = s * static_cast<double>(radius.size() - 1);
  const auto i = std::min<Eigen::Index>(static_cast<Eigen::Index>(x), radius.size() - 2);
  const double w = x - static_cast<double>(i);
  return (1.0 - w) * radius(i) + w * radius(i + 1);
}

Eigen::Vector3d tube_surface_point(const BezierState& curve, double s, double phi) {
  const Frame<double> f = frenet_frame(curve, s);
  const double r = interpolate_radius(curve.radius, s);
  return bezier_point(curve, s) + r * (-f.normal * std::cos(phi) + f.binormal * std::sin(phi));
}

namespace {

void check_tube_resolution(int rings, int ring_segments) {
  if (rings < 2) throw ValidationError("tube mesh: need at least 2 rings");
  if (ring_segments < 3) throw ValidationError("tube mesh: need at least 3 segments per ring");
}

double ring_s(int i, int rings) { return static_cast<double>(i) / (rings - 1); }
double ring_phi(int j, int ring_segments) {
  return 2.0 * std::numbers::pi * static_cast<double>(j) / ring_segments;
}

}  // namespace

Faces tube_faces(int rings, int ring_segments) {
  check_tube_resolution(rings, ring_segments);
  const int n = ring_segments;
  const int base = rings * n;
  const int tip = base + 1;
  Faces f(2 * n * (rings - 1) + 2 * n, 3);
  int k = 0;
  for (int i = 0; i + 1 < rings; ++i) {
    for (int j = 0; j < n; ++j) {
      const int a = i * n + j;
      const int b = i * n + (j + 1) % n;
      const int c = (i + 1) * n + j;
      const int d = (i + 1) * n + (j + 1) % n;
      f.row(k++) << a, c, b;
      f.row(k++) << b, c, d;
    }
  }
  for (int j = 0; j < n; ++j) {
    f.row(k++) << base, j, (j + 1) % n;
    f.row(k++) << tip, (rings - 1) * n + (j + 1) % n, (rings - 1) * n + j;
  }
  return f;
}

TriangleMesh build_tube_mesh(const BezierState& curve, int rings, int ring_segments) {
  check_tube_resolution(rings, ring_segments);
  curve.validate(rings);
  TriangleMesh mesh;
  mesh.vertices.resize(rings * ring_segments + 2, 3);
  for (int i = 0; i < rings; ++i) {
    const double s = ring_s(i, rings);
    const Frame<double> f = frenet_frame(curve, s);
    const Eigen::Vector3d p = bezier_point(curve, s);
    for (int j = 0; j < ring_segments; ++j) {
      const double phi = ring_phi(j, ring_segments);
      mesh.vertices.row(i * ring_segments + j) =
          (p + curve.radius(i) * (-f.normal * std::cos(phi) + f.binormal * std::sin(phi)))
              .transpose();
    }
  }
  mesh.vertices.row(rings * ring_segments) = curve.c(0).transpose();
  mesh.vertices.row(rings * ring_segments + 1) = curve.c(2).transpose();
  mesh.faces = tube_faces(rings, ring_segments);
  return mesh;
}

DiffMesh build_tube_mesh(const Var& control, const Var& radius, int rings, int ring_segments) {
  check_tube_resolution(rings, ring_segments);
  if (control.rows() != 3 || control.cols() != 3) {
    throw ValidationError("tube mesh: control points must be 3x3");
  }
  if (radius.rows() != rings || radius.cols() != 1) {
    throw ValidationError("tube mesh: radius must be rings x 1");
  }
  Tape& tape = control.tape();

  Matrix w0(rings, 3), w1(rings, 3), w2(rings, 3);
  for (int i = 0; i < rings; ++i) {
    const Eigen::Matrix3d b = bezier_basis(ring_s(i, rings));
    w0.row(i) = b.row(0);
    w1.row(i) = b.row(1);
    w2.row(i) = b.row(2);
  }
  const Var p = matmul(tape.constant(w0), control);
  const Var d1 = matmul(tape.constant(w1), control);
  const Var d2 = matmul(tape.constant(w2), control);

  const Var speed = norm_rows(d1);
  const Var tangent = d1 / speed;
  const Var bx = cross_rows(d1, d2);
  const Var bn = norm_rows(bx);

  std::vector<bool> degenerate(static_cast<std::size_t>(rings));
  bool any_degenerate = false;
  Matrix up(rings, 3);
  for (int i = 0; i < rings; ++i) {
    const double sp = speed.value()(i, 0);
    if (!(sp > 0.0)) throw ValidationError("tube mesh: zero tangent at ring " + std::to_string(i));
    degenerate[static_cast<std::size_t>(i)] = bn.value()(i, 0) < 1e-9 * sp * sp;
    any_degenerate = any_degenerate || degenerate[static_cast<std::size_t>(i)];
    const Eigen::Vector3d t = tangent.value().row(i).transpose();
    up.row(i) = fallback_up<double>(t).transpose();
  }

  Var normal, binormal;
  if (any_degenerate) {
    // Regular rows still use the Frenet formula; guard the division so the
    // unused branch stays finite.
    const Var safe_bn = clamp_min(bn, 1e-300);
    const Var b_frenet = bx / safe_bn;
    const Var n_frenet = cross_rows(b_frenet, tangent);
    const Var upv = tape.constant(up);
    const Var proj = upv - dot_rows(upv, tangent) * tangent;
    const Var n_fb = proj / norm_rows(proj);
    const Var b_fb = cross_rows(tangent, n_fb);
    normal = select_rows(degenerate, n_fb, n_frenet);
    binormal = select_rows(degenerate, b_fb, b_frenet);
  } else {
    binormal = bx / bn;
    normal = cross_rows(binormal, tangent);
  }

  const int n = ring_segments;
  std::vector<Eigen::Index> ring_of(static_cast<std::size_t>(rings * n));
  Matrix cphi(rings * n, 1), sphi(rings * n, 1);
  for (int i = 0; i < rings; ++i) {
    for (int j = 0; j < n; ++j) {
      const int k = i * n + j;
      ring_of[static_cast<std::size_t>(k)] = i;
      cphi(k, 0) = std::cos(ring_phi(j, n));
      sphi(k, 0) = std::sin(ring_phi(j, n));
    }
  }
  const Var offset = tape.constant(sphi) * gather_rows(binormal, ring_of) -
                     tape.constant(cphi) * gather_rows(normal, ring_of);
  const Var ring_pts = gather_rows(p, ring_of) + gather_rows(radius, ring_of) * offset;
  const Eigen::Index ends[] = {0, 2};
  const Var parts[] = {ring_pts, gather_rows(control, ends)};
  return DiffMesh{concat_rows(parts), tube_faces(rings, ring_segments)};
}

bool is_watertight(const Faces& faces) {
  std::map<std::pair<int, int>, int> edges;
  for (Eigen::Index k = 0; k < faces.rows(); ++k) {
    for (int e = 0; e < 3; ++e) {
      int a = faces(k, e), b = faces(k, (e + 1) % 3);
      if (a > b) std::swap(a, b);
      ++edges[{a, b}];
    }
  }
  if (edges.empty()) return false;
  for (const auto& [edge, count] : edges) {
    if (count != 2) return false;
  }
  return true;
}

double signed_volume(const TriangleMesh& mesh) {
  double v = 0.0;
  for (Eigen::Index k = 0; k < mesh.faces.rows(); ++k) {
    const Eigen::Vector3d a = mesh.vertices.row(mesh.faces(k, 0)).transpose();
    const Eigen::Vector3d b = mesh.vertices.row(mesh.faces(k, 1)).transpose();
    const Eigen::Vector3d c = mesh.vertices.row(mesh.faces(k, 2)).transpose();
    v += a.dot(b.cross(c));
  }
  return v / 6.0;
}

void write_obj(std::ostream& os, const TriangleMesh& mesh) {
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    os << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2)
       << '\n';
  }
  for (Eigen::Index k = 0; k < mesh.faces.rows(); ++k) {
    os << "f " << mesh.faces(k, 0) + 1 << ' ' << mesh.faces(k, 1) + 1 << ' '
       << mesh.faces(k, 2) + 1 << '\n';
  }
}

}  // namespace primfit
