#include "primfit/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace primfit {
namespace {

BezierState make_curve(const Eigen::Vector3d& c0, const Eigen::Vector3d& c1, const Eigen::Vector3d& c2,
                       int rings = 10, double radius = 0.1) {
  BezierState b;
  b.control.row(0) = c0.transpose();
  b.control.row(1) = c1.transpose();
  b.control.row(2) = c2.transpose();
  b.radius = Eigen::VectorXd::Constant(rings, radius);
  return b;
}

BezierState hook() { return make_curve({0, 0, 0}, {0, 1, 0}, {1, 1, 0}); }

BezierState random_curve(std::mt19937& rng, int rings) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> r(0.02, 0.2);
  BezierState b;
  for (int i = 0; i < 9; ++i) b.control(i / 3, i % 3) = u(rng);
  b.radius.resize(rings);
  for (int i = 0; i < rings; ++i) b.radius(i) = r(rng);
  return b;
}

TEST(Bezier, EndpointsInterpolate) {
  const BezierState b = hook();
  EXPECT_TRUE(bezier_point(b, 0.0).isApprox(b.c(0)));
  EXPECT_TRUE(bezier_point(b, 1.0).isApprox(b.c(2)));
}

TEST(Bezier, MidpointOfHook) {
  EXPECT_TRUE(bezier_point(hook(), 0.5).isApprox(Eigen::Vector3d(0.25, 0.75, 0.0)));
}

TEST(Bezier, ParameterOutOfRangeRejected) {
  EXPECT_THROW((void)bezier_point(hook(), -0.01), ValidationError);
  EXPECT_THROW((void)bezier_point(hook(), 1.01), ValidationError);
  EXPECT_THROW((void)bezier_derivatives(hook(), 2.0), ValidationError);
}

TEST(Bezier, Derivatives) {
  const BezierState b = hook();
  const auto d0 = bezier_derivatives(b, 0.0);
  EXPECT_TRUE(d0.first.isApprox(2.0 * (b.c(1) - b.c(0))));
  for (double s : {0.0, 0.3, 1.0}) {
    EXPECT_TRUE(bezier_derivatives(b, s).second.isApprox(Eigen::Vector3d(2, -2, 0)));
  }
  const BezierState line = make_curve({0, 0, 0}, {1, 1, 1}, {2, 2, 2});
  EXPECT_TRUE(bezier_derivatives(line, 0.4).second.isZero());
}

TEST(Bezier, DerivativeMatchesDifferenceQuotient) {
  std::mt19937 rng(5);
  const BezierState b = random_curve(rng, 3);
  const double h = 1e-6;
  for (double s : {0.2, 0.5, 0.8}) {
    const Eigen::Vector3d fd = (bezier_point(b, s + h) - bezier_point(b, s - h)) / (2 * h);
    EXPECT_LT((fd - bezier_derivatives(b, s).first).norm(), 1e-8);
  }
}

TEST(Frenet, HookAtStart) {
  const Frame<double> f = frenet_frame(hook(), 0.0);
  EXPECT_FALSE(f.fallback);
  EXPECT_TRUE(f.tangent.isApprox(Eigen::Vector3d(0, 1, 0)));
  EXPECT_TRUE(f.normal.isApprox(Eigen::Vector3d(1, 0, 0)));
  EXPECT_TRUE(f.binormal.isApprox(Eigen::Vector3d(0, 0, -1)));
}

TEST(Frenet, PlanarCurveBinormalIsPlaneNormal) {
  const BezierState b = make_curve({0, 0, 0}, {1, 2, 0}, {3, -1, 0});
  for (double s = 0.0; s <= 1.0; s += 0.125) {
    const Frame<double> f = frenet_frame(b, s);
    EXPECT_NEAR(std::abs(f.binormal.z()), 1.0, 1e-12);
  }
}

TEST(Frenet, StraightLineFallsBack) {
  const BezierState b = make_curve({0, 0, 0}, {1, 0, 0}, {2, 0, 0});
  const Frame<double> f = frenet_frame(b, 0.5);
  EXPECT_TRUE(f.fallback);
  EXPECT_TRUE(f.tangent.isApprox(Eigen::Vector3d(1, 0, 0)));
  EXPECT_TRUE(f.normal.isApprox(Eigen::Vector3d(0, 0, 1)));
  EXPECT_TRUE(f.binormal.isApprox(f.tangent.cross(f.normal)));
}

TEST(Frenet, VerticalLineUsesYAxis) {
  const BezierState b = make_curve({0, 0, 0}, {0, 0, 1}, {0, 0, 2});
  const Frame<double> f = frenet_frame(b, 0.2);
  EXPECT_TRUE(f.fallback);
  EXPECT_TRUE(f.normal.isApprox(Eigen::Vector3d(0, 1, 0)));
}

TEST(Frenet, OrthonormalOnRandomCurves) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> us(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const BezierState b = random_curve(rng, 2);
    const Frame<double> f = frenet_frame(b, us(rng));
    EXPECT_LT(std::abs(f.tangent.norm() - 1), 1e-9);
    EXPECT_LT(std::abs(f.normal.norm() - 1), 1e-9);
    EXPECT_LT(std::abs(f.binormal.norm() - 1), 1e-9);
    EXPECT_LT(std::abs(f.tangent.dot(f.normal)), 1e-9);
    EXPECT_LT(std::abs(f.tangent.dot(f.binormal)), 1e-9);
    EXPECT_LT(std::abs(f.normal.dot(f.binormal)), 1e-9);
    EXPECT_LT((f.tangent.cross(f.normal) - f.binormal).norm(), 1e-9);
  }
}

TEST(Radius, LinearBetweenRings) {
  Eigen::VectorXd r(3);
  r << 1.0, 3.0, 2.0;
  EXPECT_DOUBLE_EQ(interpolate_radius(r, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(interpolate_radius(r, 0.25), 2.0);
  EXPECT_DOUBLE_EQ(interpolate_radius(r, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(interpolate_radius(r, 1.0), 2.0);
}

TEST(TubeSurface, AxisPoints) {
  const BezierState b = hook();
  const Frame<double> f = frenet_frame(b, 0.3);
  const Eigen::Vector3d p = bezier_point(b, 0.3);
  const double r = interpolate_radius(b.radius, 0.3);
  EXPECT_TRUE(tube_surface_point(b, 0.3, 0.0).isApprox(p - r * f.normal));
  EXPECT_TRUE(tube_surface_point(b, 0.3, std::numbers::pi / 2).isApprox(p + r * f.binormal));
}

TEST(TubeSurface, CircleProperty) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> us(0.0, 1.0);
  const BezierState b = random_curve(rng, 7);
  for (int k = 0; k < 100; ++k) {
    const double s = us(rng), phi = 2 * std::numbers::pi * us(rng);
    const double d = (tube_surface_point(b, s, phi) - bezier_point(b, s)).norm();
    EXPECT_NEAR(d, interpolate_radius(b.radius, s), 1e-12);
  }
}

TEST(TubeMesh, DefaultDiscretisationVertexCount) {
  BezierState b = hook();
  b.radius = Eigen::VectorXd::Constant(100, 0.05);
  const TriangleMesh m = build_tube_mesh(b, 100, 40);
  EXPECT_EQ(m.vertices.rows(), 4002);
  EXPECT_EQ(m.faces.rows(), 2 * 40 * 99 + 2 * 40);
}

TEST(TubeMesh, SmallestIsWatertight) {
  BezierState b = hook();
  b.radius = Eigen::VectorXd::Constant(2, 0.1);
  const TriangleMesh m = build_tube_mesh(b, 2, 3);
  EXPECT_EQ(m.vertices.rows(), 8);
  EXPECT_EQ(m.faces.rows(), 12);
  EXPECT_TRUE(is_watertight(m.faces));
}

// Independent edge census: each undirected edge must be used exactly twice,
// once in each direction for consistent winding.
void expect_closed_oriented(const Faces& faces) {
  std::map<std::pair<int, int>, int> directed;
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) ++directed[{faces(f, k), faces(f, (k + 1) % 3)}];
  }
  for (const auto& [edge, count] : directed) {
    EXPECT_EQ(count, 1);
    EXPECT_EQ(directed.count({edge.second, edge.first}), 1u);
  }
}

TEST(TubeMesh, WatertightAndOrientedForManySizes) {
  for (int ns : {2, 3, 5, 17}) {
    for (int nphi : {3, 4, 8, 40}) {
      const Faces f = tube_faces(ns, nphi);
      EXPECT_TRUE(is_watertight(f)) << ns << "x" << nphi;
      expect_closed_oriented(f);
      EXPECT_EQ(f.maxCoeff(), ns * nphi + 1);
      EXPECT_EQ(f.minCoeff(), 0);
    }
  }
}

TEST(TubeMesh, OutwardWindingAndVolume) {
  BezierState b = make_curve({0, 0, 0}, {0.5, 0.5, 0}, {1, 0, 0}, 50, 0.05);
  const TriangleMesh m = build_tube_mesh(b, 50, 64);
  // Pappus-style oracle: cross-section area times arc length.
  double length = 0.0;
  Eigen::Vector3d prev = bezier_point(b, 0.0);
  for (int i = 1; i <= 2000; ++i) {
    const Eigen::Vector3d p = bezier_point(b, i / 2000.0);
    length += (p - prev).norm();
    prev = p;
  }
  const double expected = std::numbers::pi * 0.05 * 0.05 * length;
  EXPECT_GT(signed_volume(m), 0.0);
  EXPECT_NEAR(signed_volume(m), expected, 0.03 * expected);
}

TEST(TubeMesh, RejectsBadDiscretisation) {
  BezierState b = hook();
  EXPECT_THROW((void)build_tube_mesh(b, 10, 2), ValidationError);
  EXPECT_THROW((void)build_tube_mesh(b, 1, 8), ValidationError);
  b.radius = Eigen::VectorXd::Constant(5, 0.1);
  EXPECT_THROW((void)build_tube_mesh(b, 10, 8), ValidationError);
  b.radius = Eigen::VectorXd::Constant(10, -0.1);
  EXPECT_THROW((void)build_tube_mesh(b, 10, 8), ValidationError);
}

TEST(TubeMesh, TranslationEquivariance) {
  std::mt19937 rng(4);
  const BezierState b = random_curve(rng, 6);
  BezierState moved = b;
  const Eigen::RowVector3d v(0.3, -1.2, 2.0);
  moved.control.rowwise() += v;
  const TriangleMesh m0 = build_tube_mesh(b, 6, 7);
  const TriangleMesh m1 = build_tube_mesh(moved, 6, 7);
  EXPECT_LT(((m1.vertices.rowwise() - v) - m0.vertices).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TubeMesh, RotationEquivariance) {
  std::mt19937 rng(8);
  const BezierState b = random_curve(rng, 6);
  const Eigen::Matrix3d r = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  BezierState turned = b;
  turned.control = b.control * r.transpose();
  const TriangleMesh m0 = build_tube_mesh(b, 6, 7);
  const TriangleMesh m1 = build_tube_mesh(turned, 6, 7);
  EXPECT_LT((m1.vertices - m0.vertices * r.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TubeMesh, TapeAgreesWithPlainBuild) {
  std::mt19937 rng(9);
  const BezierState b = random_curve(rng, 5);
  Tape t;
  const DiffMesh d = build_tube_mesh(t.leaf(b.control), t.leaf(b.radius), 5, 6);
  const TriangleMesh m = build_tube_mesh(b, 5, 6);
  EXPECT_LT((d.vertices.value() - Matrix(m.vertices)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(d.faces, m.faces);
}

TEST(TubeMesh, VertexGradientsMatchFiniteDifferences) {
  std::mt19937 rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const BezierState b = random_curve(rng, 4);
    Matrix weights = Matrix::Random(4 * 5 + 2, 3);
    const auto f_control = [&](Tape& t, const Var& c) {
      const DiffMesh d = build_tube_mesh(c, t.constant(b.radius), 4, 5);
      return sum(d.vertices * t.constant(weights));
    };
    EXPECT_LT(grad_check(f_control, b.control, 1e-6), 1e-5);
    const auto f_radius = [&](Tape& t, const Var& r) {
      const DiffMesh d = build_tube_mesh(t.constant(b.control), r, 4, 5);
      return sum(d.vertices * t.constant(weights));
    };
    EXPECT_LT(grad_check(f_radius, Matrix(b.radius), 1e-6), 1e-5);
  }
}

TEST(TubeMesh, ObjExport) {
  BezierState b = hook();
  b.radius = Eigen::VectorXd::Constant(2, 0.1);
  std::ostringstream os;
  write_obj(os, build_tube_mesh(b, 2, 3));
  const std::string s = os.str();
  int v = 0, f = 0;
  std::istringstream is(s);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("v ", 0) == 0) ++v;
    if (line.rfind("f ", 0) == 0) ++f;
  }
  EXPECT_EQ(v, 8);
  EXPECT_EQ(f, 12);
  EXPECT_EQ(s.find("f 0 "), std::string::npos);
}

}  // namespace
}  // namespace primfit
