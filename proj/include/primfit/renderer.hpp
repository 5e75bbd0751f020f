#pragma once

// Pinhole projection and soft silhouette rasterization.
//
// Pixel (i, j) is (row, column) with its center at (u, v) = (j + 0.5, i + 0.5).
// Each face j contributes D_j(p) = sigmoid(delta_j(p) * d_j(p)^2 / sigma), where
// d_j is the screen distance from p to the triangle boundary and delta_j is +1
// inside, -1 outside. Pixels blend as S(p) = 1 - prod_j (1 - D_j(p)).

#include "primfit/autodiff.hpp"
#include "primfit/geometry.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace primfit {

constexpr double kZNear = 1e-3;
/// Logit beyond which a face's contribution is treated as saturated.
constexpr double kLogitCut = 20.0;

struct CameraModel {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;
};

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> project(const CameraModel& cam, const Vec3<Scalar>& p) {
  return {Scalar(cam.fx) * p.x() / p.z() + Scalar(cam.cx),
          Scalar(cam.fy) * p.y() / p.z() + Scalar(cam.cy)};
}

/// Empty when the point is at or behind the near plane.
std::optional<Eigen::Vector2d> project_point(const CameraModel& cam, const Eigen::Vector3d& p);

struct Projection {
  Var pixels;                 // N x 2 (u, v); clipped rows hold zeros
  std::vector<bool> clipped;  // z <= kZNear
};

Projection project(const CameraModel& cam, const Var& points);

struct ScreenDistance {
  bool inside = false;
  double distance = 0.0;
};

/// Distance from `p` to the boundary of triangle abc.
ScreenDistance screen_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                               const Eigen::Vector2d& b, const Eigen::Vector2d& c);

/// Padding (pixels) of each face's support window for a given sigma.
int support_radius(double sigma);

/// Soft rasterizer on screen-space vertices. Faces flagged false in
/// `face_enabled` and faces with area <= 1e-12 px^2 are skipped.
Var rasterize(const Var& screen, const Faces& faces, const std::vector<bool>& face_enabled,
              int width, int height, double sigma);

/// Projects a camera-frame mesh and rasterizes it. Faces with any vertex
/// behind the near plane are culled whole.
Var render_silhouette(const DiffMesh& mesh, const CameraModel& cam, double sigma);
Matrix render_silhouette(const TriangleMesh& mesh, const CameraModel& cam, double sigma);

}  // namespace primfit
