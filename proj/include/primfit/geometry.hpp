#pragma once

// Quadratic Bezier centerline and the tubular surface mesh swept along it.
//
// Scalar-generic helpers work on Eigen 3-vectors; the tape builders produce a
// mesh whose vertices are differentiable in the control points and radii.

#include "primfit/autodiff.hpp"
#include "primfit/errors.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <iosfwd>
#include <string>
#include <vector>

namespace primfit {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;

struct TriangleMesh {
  Vertices vertices;
  Faces faces;
};

/// Mesh whose vertex block lives on a tape.
struct DiffMesh {
  Var vertices;  // N x 3
  Faces faces;
};

/// Three control points (rows c0, c1, c2) and one radius per ring.
struct BezierState {
  Eigen::Matrix3d control = Eigen::Matrix3d::Zero();
  Eigen::VectorXd radius;

  [[nodiscard]] Eigen::Vector3d c(int i) const { return control.row(i).transpose(); }
  void validate(Eigen::Index rings) const;
};

inline void check_curve_parameter(double s) {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw ValidationError("bezier: parameter s=" + std::to_string(s) + " outside [0,1]");
  }
}

/// Bernstein weights of the quadratic curve and its two derivatives at s.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> bezier_basis(Scalar s) {
  Eigen::Matrix<Scalar, 3, 3> w;
  const Scalar t = Scalar(1) - s;
  w << t * t, Scalar(2) * t * s, s * s,                      // p
      Scalar(-2) * t, Scalar(2) * t - Scalar(2) * s, Scalar(2) * s,  // p'
      Scalar(2), Scalar(-4), Scalar(2);                      // p''
  return w;
}

template <typename Scalar>
Vec3<Scalar> bezier_point(const Vec3<Scalar>& c0, const Vec3<Scalar>& c1, const Vec3<Scalar>& c2,
                          Scalar s) {
  const Scalar t = Scalar(1) - s;
  return t * t * c0 + Scalar(2) * t * s * c1 + s * s * c2;
}

template <typename Scalar>
struct CurveDerivatives {
  Vec3<Scalar> first;
  Vec3<Scalar> second;
};

template <typename Scalar>
CurveDerivatives<Scalar> bezier_derivatives(const Vec3<Scalar>& c0, const Vec3<Scalar>& c1,
                                            const Vec3<Scalar>& c2, Scalar s) {
  return {Scalar(2) * (Scalar(1) - s) * (c1 - c0) + Scalar(2) * s * (c2 - c1),
          Scalar(2) * (c2 - Scalar(2) * c1 + c0)};
}

template <typename Scalar>
struct Frame {
  Vec3<Scalar> tangent;
  Vec3<Scalar> normal;
  Vec3<Scalar> binormal;
  bool fallback = false;
};

/// Normal used when the curve is locally straight: the up axis with its
/// tangential part removed, or the y axis when the tangent is nearly vertical.
template <typename Scalar>
Vec3<Scalar> fallback_up(const Vec3<Scalar>& tangent) {
  using std::abs;
  const Vec3<Scalar> z(Scalar(0), Scalar(0), Scalar(1));
  if (abs(abs(tangent.dot(z)) - Scalar(1)) < Scalar(1e-6)) {
    return Vec3<Scalar>(Scalar(0), Scalar(1), Scalar(0));
  }
  return z;
}

/// Frenet-Serret frame from first and second derivatives. Degenerate when
/// |p' x p''| < 1e-9 |p'|^2.
template <typename Scalar>
Frame<Scalar> frenet_frame(const Vec3<Scalar>& d1, const Vec3<Scalar>& d2) {
  const Scalar speed = d1.norm();
  if (!(speed > Scalar(0))) throw ValidationError("frenet_frame: zero tangent");
  Frame<Scalar> f;
  f.tangent = d1 / speed;
  const Vec3<Scalar> bx = d1.cross(d2);
  const Scalar bn = bx.norm();
  if (bn < Scalar(1e-9) * speed * speed) {
    const Vec3<Scalar> up = fallback_up(f.tangent);
    f.normal = (up - up.dot(f.tangent) * f.tangent).normalized();
    f.binormal = f.tangent.cross(f.normal);
    f.fallback = true;
    return f;
  }
  f.binormal = bx / bn;
  f.normal = f.binormal.cross(f.tangent);
  return f;
}

Eigen::Vector3d bezier_point(const BezierState& curve, double s);
CurveDerivatives<double> bezier_derivatives(const BezierState& curve, double s);
Frame<double> frenet_frame(const BezierState& curve, double s);

/// Radius at arbitrary s, linear between evenly spaced rings.
double interpolate_radius(const Eigen::VectorXd& radius, double s);

Eigen::Vector3d tube_surface_point(const BezierState& curve, double s, double phi);

/// Ring-grid + two end-point vertices; see tube_faces for connectivity.
TriangleMesh build_tube_mesh(const BezierState& curve, int rings, int ring_segments);

/// Tape version. `control` is 3x3 (rows c0..c2), `radius` is rings x 1 and
/// already positive.
DiffMesh build_tube_mesh(const Var& control, const Var& radius, int rings, int ring_segments);

/// Side wall quads split in two plus fans to the two end vertices.
Faces tube_faces(int rings, int ring_segments);

/// Every undirected edge is shared by exactly two faces.
bool is_watertight(const Faces& faces);

/// Divergence-theorem volume; positive for outward winding.
double signed_volume(const TriangleMesh& mesh);

void write_obj(std::ostream& os, const TriangleMesh& mesh);

}  // namespace primfit
