#pragma once

// Brute-force reference implementations used by the unit and acceptance tests.
// They favor obviousness over speed and share no code with the library.

#include "primfit/imageproc.hpp"

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <vector>

namespace primfit::oracle {

/// Barycentric point-in-triangle test, boundary inclusive.
inline bool inside_triangle(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                            const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  Eigen::Matrix2d m;
  m << b - a, c - a;
  const Eigen::Vector2d l = m.inverse() * (p - a);
  return l.x() >= 0 && l.y() >= 0 && l.x() + l.y() <= 1;
}

/// Hard coverage of pixel centers by any triangle of a screen-space mesh.
inline Eigen::MatrixXd hard_raster(const Eigen::MatrixXd& screen, const Eigen::MatrixXi& faces,
                                   int width, int height) {
  Eigen::MatrixXd img = Eigen::MatrixXd::Zero(height, width);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const Eigen::Vector2d p(j + 0.5, i + 0.5);
      for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const Eigen::Vector2d a = screen.row(faces(f, 0)).transpose();
        const Eigen::Vector2d b = screen.row(faces(f, 1)).transpose();
        const Eigen::Vector2d c = screen.row(faces(f, 2)).transpose();
        const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
        if (std::abs(area) < 1e-12) continue;
        if (inside_triangle(p, a, b, c)) {
          img(i, j) = 1.0;
          break;
        }
      }
    }
  }
  return img;
}

/// Distance from p to the nearest triangle edge of a screen-space mesh.
inline double distance_to_edges(const Eigen::Vector2d& p, const Eigen::MatrixXd& screen,
                                const Eigen::MatrixXi& faces) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector2d a = screen.row(faces(f, k)).transpose();
      const Eigen::Vector2d e = screen.row(faces(f, (k + 1) % 3)).transpose() - a;
      const double t = std::clamp((p - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
      best = std::min(best, (p - a - t * e).norm());
    }
  }
  return best;
}

/// Nearest positive pixel by exhaustive search over all pairs.
inline Eigen::MatrixXd brute_distance_map(const Mask& mask, double gamma) {
  Eigen::MatrixXd out(mask.rows(), mask.cols());
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index a = 0; a < mask.rows(); ++a) {
        for (Eigen::Index b = 0; b < mask.cols(); ++b) {
          if (mask(a, b)) best = std::min(best, std::hypot(double(a - i), double(b - j)));
        }
      }
      out(i, j) = best / gamma;
    }
  }
  return out;
}

/// 4-connected labels by repeated min-label propagation until nothing changes.
inline Eigen::MatrixXi component_labels(const Mask& mask) {
  const Eigen::Index h = mask.rows(), w = mask.cols();
  Eigen::MatrixXi label = Eigen::MatrixXi::Constant(h, w, -1);
  for (Eigen::Index k = 0; k < mask.size(); ++k) {
    if (mask(k)) label(k) = static_cast<int>(k);
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (Eigen::Index i = 0; i < h; ++i) {
      for (Eigen::Index j = 0; j < w; ++j) {
        if (label(i, j) < 0) continue;
        const Eigen::Index di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
        for (int n = 0; n < 4; ++n) {
          const Eigen::Index a = i + di[n], b = j + dj[n];
          if (a < 0 || b < 0 || a >= h || b >= w || label(a, b) < 0) continue;
          if (label(a, b) < label(i, j)) {
            label(i, j) = label(a, b);
            changed = true;
          }
        }
      }
    }
  }
  return label;
}

/// Largest 4-connected component; ties go to the component whose first
/// pixel in column-major order comes first.
inline Mask largest_component(const Mask& mask) {
  const Eigen::MatrixXi label = component_labels(mask);
  std::map<int, int> size;
  for (Eigen::Index k = 0; k < label.size(); ++k) {
    if (label(k) >= 0) ++size[label(k)];
  }
  int best = -1, best_size = 0;
  for (const auto& [l, s] : size) {
    if (s > best_size) {
      best = l;
      best_size = s;
    }
  }
  Mask out = Mask::Zero(mask.rows(), mask.cols());
  for (Eigen::Index k = 0; k < label.size(); ++k) out(k) = label(k) == best && best >= 0;
  return out;
}

/// Number of 8-connected components.
inline int count_components_8(const Mask& mask) {
  const Eigen::Index h = mask.rows(), w = mask.cols();
  Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(h, w);
  int count = 0;
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < w; ++j) {
      if (!mask(i, j) || seen(i, j)) continue;
      ++count;
      std::vector<std::pair<Eigen::Index, Eigen::Index>> stack{{i, j}};
      seen(i, j) = 1;
      while (!stack.empty()) {
        const auto [a, b] = stack.back();
        stack.pop_back();
        for (int da = -1; da <= 1; ++da) {
          for (int db = -1; db <= 1; ++db) {
            const Eigen::Index x = a + da, y = b + db;
            if (x < 0 || y < 0 || x >= h || y >= w || !mask(x, y) || seen(x, y)) continue;
            seen(x, y) = 1;
            stack.emplace_back(x, y);
          }
        }
      }
    }
  }
  return count;
}

/// Random blobby mask: a union of a few filled discs.
inline Mask random_blobs(std::mt19937& rng, int h, int w, int discs) {
  std::uniform_real_distribution<double> ur(0.0, h), uc(0.0, w), rad(1.0, 0.25 * std::min(h, w));
  Mask m = Mask::Zero(h, w);
  for (int d = 0; d < discs; ++d) {
    const double r0 = ur(rng), c0 = uc(rng), r = rad(rng);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        if (std::hypot(i - r0, j - c0) <= r) m(i, j) = 1;
      }
    }
  }
  return m;
}

/// Central finite differences of a scalar function of a matrix.
template <typename F>
Eigen::MatrixXd numeric_gradient(const F& f, Eigen::MatrixXd x, double step) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double orig = x(k);
    x(k) = orig + step;
    const double up = f(x);
    x(k) = orig - step;
    const double down = f(x);
    x(k) = orig;
    g(k) = (up - down) / (2 * step);
  }
  return g;
}

/// max_k |a_k - n_k| / max(1, |n_k|).
inline double max_relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < analytic.size(); ++k) {
    const double e = std::abs(analytic(k) - numeric(k)) / std::max(1.0, std::abs(numeric(k)));
    if (std::isnan(e)) return e;
    worst = std::max(worst, e);
  }
  return worst;
}

}  // namespace primfit::oracle
