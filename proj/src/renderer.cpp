#include "primfit/renderer.hpp"

#include "primfit/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>

namespace primfit {

void CameraModel::validate() const {
  if (!(fx > 0 && fy > 0)) throw ValidationError("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ValidationError("camera: image size must be positive");
  if (!(cx >= 0 && cx < width && cy >= 0 && cy < height)) {
    throw ValidationError("camera: principal point outside the image");
  }
}

std::optional<Eigen::Vector2d> project_point(const CameraModel& cam, const Eigen::Vector3d& p) {
  if (!(p.z() > kZNear)) return std::nullopt;
  return project<double>(cam, p);
}

Projection project(const CameraModel& cam, const Var& points) {
  if (points.cols() != 3) throw ValidationError("project: points must be N x 3");
  const Matrix& p = points.value();
  Matrix uv = Matrix::Zero(p.rows(), 2);
  std::vector<bool> clipped(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double z = p(i, 2);
    if (!(z > kZNear)) {
      clipped[static_cast<std::size_t>(i)] = true;
      continue;
    }
    uv(i, 0) = cam.fx * p(i, 0) / z + cam.cx;
    uv(i, 1) = cam.fy * p(i, 1) / z + cam.cy;
  }
  const Var in[] = {points};
  Var out = points.tape().custom(
      "project", in, std::move(uv), [cam, clipped](const BackwardArgs& args) {
        if (!args.in_grads[0]) return;
        const Matrix& p = *args.inputs[0];
        const Matrix& g = args.out_grad;
        Matrix& gp = *args.in_grads[0];
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
          if (clipped[static_cast<std::size_t>(i)]) continue;
          const double iz = 1.0 / p(i, 2);
          const double gu = g(i, 0) * cam.fx * iz;
          const double gv = g(i, 1) * cam.fy * iz;
          gp(i, 0) += gu;
          gp(i, 1) += gv;
          gp(i, 2) -= (gu * p(i, 0) + gv * p(i, 1)) * iz;
        }
      });
  return {out, std::move(clipped)};
}

ScreenDistance screen_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                               const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const Eigen::Vector2d v[3] = {a, b, c};
  const double area2 = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  double best = std::numeric_limits<double>::infinity();
  bool pos = true, neg = true;
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector2d e = v[(k + 1) % 3] - v[k];
    const Eigen::Vector2d r = p - v[k];
    const double len2 = e.squaredNorm();
    const double t = len2 > 0 ? std::clamp(r.dot(e) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, (r - t * e).squaredNorm());
    const double w = e.x() * r.y() - e.y() * r.x();
    pos = pos && w >= 0;
    neg = neg && w <= 0;
  }
  const bool inside = area2 >= 0 ? pos : neg;
  return {inside, std::sqrt(best)};
}

int support_radius(double sigma) {
  return static_cast<int>(std::ceil(std::sqrt(sigma * kLogitCut)));
}

namespace {

// Accumulated -log(1 - S) beyond which S == 1 in double precision.
constexpr double kSaturated = 40.0;

struct Edge {
  double ox, oy;  // origin
  double ex, ey;  // direction
  double inv_len2;
};

struct FaceSetup {
  int vid[3];
  Edge edge[3];
  double orient;  // +1 counter-clockwise in (u, v), -1 otherwise
  int row0, row1;
  int col0, col1;
  // Half-plane form of the outward edge distances, used to bound each row.
  double hx[3], hc[3], hy[3];
};

struct Nearest {
  double d2;
  double rx, ry;  // p - closest boundary point
  double t;
  int edge;
  bool inside;
};

inline Nearest nearest_boundary(const FaceSetup& f, double px, double py) {
  Nearest n{std::numeric_limits<double>::infinity(), 0, 0, 0, 0, false};
  bool pos = true, neg = true;
  for (int k = 0; k < 3; ++k) {
    const Edge& e = f.edge[k];
    const double dx = px - e.ox, dy = py - e.oy;
    double t = (dx * e.ex + dy * e.ey) * e.inv_len2;
    t = t < 0 ? 0 : (t > 1 ? 1 : t);
    const double rx = dx - t * e.ex, ry = dy - t * e.ey;
    const double d2 = rx * rx + ry * ry;
    if (d2 < n.d2) n = {d2, rx, ry, t, k, false};
    const double w = e.ex * dy - e.ey * dx;
    pos = pos && w >= 0;
    neg = neg && w <= 0;
  }
  n.inside = f.orient > 0 ? pos : neg;
  return n;
}

std::vector<FaceSetup> setup_faces(const Matrix& screen, const Faces& faces,
                                   const std::vector<bool>& enabled, int width, int height,
                                   int pad) {
  std::vector<FaceSetup> out;
  out.reserve(static_cast<std::size_t>(faces.rows()));
  for (Eigen::Index k = 0; k < faces.rows(); ++k) {
    if (!enabled[static_cast<std::size_t>(k)]) continue;
    FaceSetup f;
    double vx[3], vy[3];
    for (int c = 0; c < 3; ++c) {
      f.vid[c] = faces(k, c);
      vx[c] = screen(f.vid[c], 0);
      vy[c] = screen(f.vid[c], 1);
    }
    const double area2 = (vx[1] - vx[0]) * (vy[2] - vy[0]) - (vy[1] - vy[0]) * (vx[2] - vx[0]);
    if (!(std::abs(area2) > 2e-12)) continue;
    f.orient = area2 > 0 ? 1.0 : -1.0;
    double lo_v = vy[0], hi_v = vy[0];
    for (int c = 0; c < 3; ++c) {
      const int n = (c + 1) % 3;
      Edge& e = f.edge[c];
      e.ox = vx[c];
      e.oy = vy[c];
      e.ex = vx[n] - vx[c];
      e.ey = vy[n] - vy[c];
      const double len2 = e.ex * e.ex + e.ey * e.ey;
      e.inv_len2 = 1.0 / len2;
      // Outward signed distance: sd(u, v) = hx*u + hy*v + hc.
      const double s = -f.orient / std::sqrt(len2);
      f.hx[c] = -s * e.ey;
      f.hy[c] = s * e.ex;
      f.hc[c] = s * (e.ey * e.ox - e.ex * e.oy);
      lo_v = std::min(lo_v, vy[c]);
      hi_v = std::max(hi_v, vy[c]);
    }
    // Pixel centers sit at i + 0.5.
    f.row0 = std::max(0, static_cast<int>(std::floor(lo_v - pad - 0.5)));
    f.row1 = std::min(height - 1, static_cast<int>(std::ceil(hi_v + pad - 0.5)));
    if (f.row0 > f.row1) continue;
    double lo_u = std::min({vx[0], vx[1], vx[2]}), hi_u = std::max({vx[0], vx[1], vx[2]});
    f.col0 = std::max(0, static_cast<int>(std::floor(lo_u - pad - 0.5)));
    f.col1 = std::min(width - 1, static_cast<int>(std::ceil(hi_u + pad - 0.5)));
    if (f.col0 > f.col1) continue;
    out.push_back(f);
  }
  return out;
}

// Column span [c0, c1] of row `v` (pixel-center ordinate) whose centers lie
// within `pad` of every supporting edge line, clipped to the padded bbox.
inline bool row_span(const FaceSetup& f, double v, double pad, int& c0, int& c1) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    const double rhs = pad + 1e-9 - f.hy[k] * v - f.hc[k];
    if (f.hx[k] > 1e-15) {
      hi = std::min(hi, rhs / f.hx[k]);
    } else if (f.hx[k] < -1e-15) {
      lo = std::max(lo, rhs / f.hx[k]);
    } else if (rhs < 0) {
      return false;
    }
  }
  c0 = std::max(f.col0, static_cast<int>(std::ceil(lo - 0.5)));
  c1 = std::min(f.col1, static_cast<int>(std::floor(hi - 0.5)));
  return c0 <= c1;
}

}  // namespace

Var rasterize(const Var& screen, const Faces& faces, const std::vector<bool>& face_enabled,
              int width, int height, double sigma) {
  if (!(sigma > 0)) throw ValidationError("rasterize: sigma must be positive");
  if (screen.cols() != 2) throw ValidationError("rasterize: screen vertices must be N x 2");
  if (static_cast<Eigen::Index>(face_enabled.size()) != faces.rows()) {
    throw ValidationError("rasterize: face mask size mismatch");
  }
  if (faces.size() > 0 && (faces.minCoeff() < 0 || faces.maxCoeff() >= screen.rows())) {
    throw ValidationError("rasterize: face index out of range");
  }
  const int pad = support_radius(sigma);
  const double inv_sigma = 1.0 / sigma;
  const std::vector<FaceSetup> setups =
      setup_faces(screen.value(), faces, face_enabled, width, height, pad);

  // Every non-negligible (face, pixel) pair, with what the adjoint needs:
  // dS/d(d^2) = (1 - S) * sigmoid(x) * delta / sigma.
  struct Contribution {
    int pixel;
    int edge;
    double coeff;   // sigmoid(x) * delta / sigma
    double rx, ry;  // p - closest boundary point
    double t;
  };
  auto contrib = std::make_shared<std::vector<Contribution>>();
  auto face_end = std::make_shared<std::vector<std::size_t>>();
  face_end->reserve(setups.size());
  std::size_t bound = 0;
  for (const FaceSetup& f : setups) {
    bound += static_cast<std::size_t>(f.row1 - f.row0 + 1) * static_cast<std::size_t>(f.col1 - f.col0 + 1);
  }
  contrib->reserve(bound);

  // Row-major accumulation of -log(1 - S).
  auto acc = std::make_shared<std::vector<double>>(static_cast<std::size_t>(width) * height, 0.0);
  for (const FaceSetup& f : setups) {
    for (int i = f.row0; i <= f.row1; ++i) {
      const double v = i + 0.5;
      int c0, c1;
      if (!row_span(f, v, pad, c0, c1)) continue;
      double* row = acc->data() + static_cast<std::size_t>(i) * width;
      for (int j = c0; j <= c1; ++j) {
        if (row[j] > kSaturated) continue;
        const Nearest n = nearest_boundary(f, j + 0.5, v);
        const double x = (n.inside ? n.d2 : -n.d2) * inv_sigma;
        if (x < -kLogitCut) continue;
        const double e = std::exp(-std::abs(x));
        row[j] += std::max(x, 0.0) + std::log1p(e);
        const double sig = x >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
        contrib->push_back({i * width + j, n.edge, (n.inside ? sig : -sig) * inv_sigma, n.rx,
                            n.ry, n.t});
      }
    }
    face_end->push_back(contrib->size());
  }

  Matrix image(height, width);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      image(i, j) = -std::expm1(-(*acc)[static_cast<std::size_t>(i) * width + j]);
    }
  }

  std::vector<std::array<int, 3>> vids;
  vids.reserve(setups.size());
  for (const FaceSetup& f : setups) vids.push_back({f.vid[0], f.vid[1], f.vid[2]});

  const Var in[] = {screen};
  return screen.tape().custom(
      "rasterize", in, std::move(image),
      [vids = std::move(vids), contrib, face_end, acc, width, height](const BackwardArgs& args) {
        if (!args.in_grads[0]) return;
        // Fold (1 - S) = exp(-acc) into a per-pixel weight.
        std::vector<double> weight(static_cast<std::size_t>(width) * height);
        for (int i = 0; i < height; ++i) {
          for (int j = 0; j < width; ++j) {
            const std::size_t p = static_cast<std::size_t>(i) * width + j;
            const double a = (*acc)[p];
            weight[p] = a > kSaturated ? 0.0 : args.out_grad(i, j) * std::exp(-a);
          }
        }
        Matrix& g = *args.in_grads[0];
        std::size_t k = 0;
        for (std::size_t fi = 0; fi < vids.size(); ++fi) {
          double gv[3][2] = {{0, 0}, {0, 0}, {0, 0}};
          for (; k < (*face_end)[fi]; ++k) {
            const Contribution& c = (*contrib)[k];
            const double w = weight[static_cast<std::size_t>(c.pixel)];
            if (w == 0.0) continue;
            const double gd2 = w * c.coeff;
            // d(d^2)/d(origin) = -2 r (1 - t), d(d^2)/d(end) = -2 r t.
            const double s0 = -2.0 * gd2 * (1.0 - c.t);
            const double s1 = -2.0 * gd2 * c.t;
            const int a = c.edge, b = (c.edge + 1) % 3;
            gv[a][0] += s0 * c.rx;
            gv[a][1] += s0 * c.ry;
            gv[b][0] += s1 * c.rx;
            gv[b][1] += s1 * c.ry;
          }
          for (int c = 0; c < 3; ++c) {
            g(vids[fi][c], 0) += gv[c][0];
            g(vids[fi][c], 1) += gv[c][1];
          }
        }
      });
}

Var render_silhouette(const DiffMesh& mesh, const CameraModel& cam, double sigma) {
  if (!(sigma > 0)) throw ValidationError("render_silhouette: sigma must be positive");
  cam.validate();
  if (mesh.faces.rows() == 0) {
    return mesh.vertices.tape().constant(Matrix::Zero(cam.height, cam.width));
  }
  const Projection proj = project(cam, mesh.vertices);
  std::vector<bool> enabled(static_cast<std::size_t>(mesh.faces.rows()));
  for (Eigen::Index k = 0; k < mesh.faces.rows(); ++k) {
    enabled[static_cast<std::size_t>(k)] =
        !(proj.clipped[static_cast<std::size_t>(mesh.faces(k, 0))] ||
          proj.clipped[static_cast<std::size_t>(mesh.faces(k, 1))] ||
          proj.clipped[static_cast<std::size_t>(mesh.faces(k, 2))]);
  }
  return rasterize(proj.pixels, mesh.faces, enabled, cam.width, cam.height, sigma);
}

Matrix render_silhouette(const TriangleMesh& mesh, const CameraModel& cam, double sigma) {
  Tape tape;
  const DiffMesh dm{tape.constant(Matrix(mesh.vertices)), mesh.faces};
  return render_silhouette(dm, cam, sigma).value();
}

}  // namespace primfit
