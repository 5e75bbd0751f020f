#include "primfit/imageproc.hpp"

#include "primfit/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>

namespace primfit {

Eigen::Vector3d rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double hi = std::max({r, g, b});
  const double lo = std::min({r, g, b});
  const double delta = hi - lo;
  double h = 0.0;
  if (delta > 0) {
    if (hi == r) {
      h = 60.0 * std::fmod((g - b) / delta, 6.0);
    } else if (hi == g) {
      h = 60.0 * ((b - r) / delta + 2.0);
    } else {
      h = 60.0 * ((r - g) / delta + 4.0);
    }
    if (h < 0) h += 360.0;
  }
  const double s = hi > 0 ? delta / hi : 0.0;
  return {h, s, hi};
}

namespace {

bool in_hue(double h, double lo, double hi) {
  return lo <= hi ? (h >= lo && h <= hi) : (h >= lo || h <= hi);
}

constexpr std::array<std::array<int, 2>, 4> kN4 = {{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
constexpr std::array<std::array<int, 2>, 8> kN8 = {
    {{-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}}};

// Component labels (0 = background) for value `target` under the given
// neighborhood. Returns the number of labels.
template <std::size_t K>
int label_components(const Mask& mask, std::uint8_t target,
                     const std::array<std::array<int, 2>, K>& nbhd, Eigen::MatrixXi& labels,
                     std::vector<int>& sizes) {
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  labels = Eigen::MatrixXi::Zero(h, w);
  sizes.assign(1, 0);
  int next = 0;
  std::vector<std::pair<int, int>> stack;
  for (int j = 0; j < w; ++j) {
    for (int i = 0; i < h; ++i) {
      if (mask(i, j) != target || labels(i, j) != 0) continue;
      ++next;
      sizes.push_back(0);
      stack.assign(1, {i, j});
      labels(i, j) = next;
      while (!stack.empty()) {
        const auto [r, c] = stack.back();
        stack.pop_back();
        ++sizes[static_cast<std::size_t>(next)];
        for (const auto& d : nbhd) {
          const int rr = r + d[0], cc = c + d[1];
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          if (mask(rr, cc) != target || labels(rr, cc) != 0) continue;
          labels(rr, cc) = next;
          stack.emplace_back(rr, cc);
        }
      }
    }
  }
  return next;
}

}  // namespace

Mask largest_component(const Mask& mask) {
  Eigen::MatrixXi labels;
  std::vector<int> sizes;
  const int n = label_components(mask, 1, kN4, labels, sizes);
  Mask out = Mask::Zero(mask.rows(), mask.cols());
  if (n == 0) return out;
  // Ties go to the first component in column-major scan order.
  const auto best = std::max_element(sizes.begin() + 1, sizes.end()) - sizes.begin();
  for (Eigen::Index k = 0; k < mask.size(); ++k) out(k) = labels(k) == best ? 1 : 0;
  return out;
}

Mask fill_holes(const Mask& mask) {
  Eigen::MatrixXi labels;
  std::vector<int> sizes;
  label_components(mask, 0, kN8, labels, sizes);
  std::vector<bool> touches_border(sizes.size(), false);
  const Eigen::Index h = mask.rows(), w = mask.cols();
  for (Eigen::Index i = 0; i < h; ++i) {
    touches_border[static_cast<std::size_t>(labels(i, 0))] = true;
    touches_border[static_cast<std::size_t>(labels(i, w - 1))] = true;
  }
  for (Eigen::Index j = 0; j < w; ++j) {
    touches_border[static_cast<std::size_t>(labels(0, j))] = true;
    touches_border[static_cast<std::size_t>(labels(h - 1, j))] = true;
  }
  Mask out = mask;
  for (Eigen::Index k = 0; k < mask.size(); ++k) {
    if (mask(k) == 0 && !touches_border[static_cast<std::size_t>(labels(k))]) out(k) = 1;
  }
  return out;
}

Mask color_segment(const RgbImage& image, const HsvRange& range) {
  if (image.width <= 0 || image.height <= 0 ||
      image.data.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw ValidationError("color_segment: malformed image");
  }
  Mask raw = Mask::Zero(image.height, image.width);
  for (int i = 0; i < image.height; ++i) {
    for (int j = 0; j < image.width; ++j) {
      const std::uint8_t* px = image.at(i, j);
      const Eigen::Vector3d hsv = rgb_to_hsv(px[0], px[1], px[2]);
      raw(i, j) = in_hue(hsv[0], range.hue_lo, range.hue_hi) && hsv[1] >= range.sat_lo &&
                          hsv[1] <= range.sat_hi && hsv[2] >= range.val_lo &&
                          hsv[2] <= range.val_hi
                      ? 1
                      : 0;
    }
  }
  Mask out = fill_holes(largest_component(raw));
  if ((out.array() == 0).all()) throw ValidationError("color_segment: empty mask");
  return out;
}

Mask skeletonize(const Mask& mask) {
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  if (h == 0 || w == 0 || (mask.array() == 0).all()) {
    throw ValidationError("skeletonize: empty mask");
  }
  Mask img = mask;
  const auto px = [&](int r, int c) -> int {
    return (r < 0 || r >= h || c < 0 || c >= w) ? 0 : img(r, c);
  };
  std::vector<std::pair<int, int>> doomed;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      doomed.clear();
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          if (!img(i, j)) continue;
          // P2..P9 clockwise from north.
          int p[8];
          for (int k = 0; k < 8; ++k) p[k] = px(i + kN8[static_cast<std::size_t>(k)][0], j + kN8[static_cast<std::size_t>(k)][1]);
          const int b = p[0] + p[1] + p[2] + p[3] + p[4] + p[5] + p[6] + p[7];
          if (b < 2 || b > 6) continue;
          int a = 0;
          for (int k = 0; k < 8; ++k) a += (p[k] == 0 && p[(k + 1) % 8] == 1);
          if (a != 1) continue;
          const int n = p[0], e = p[2], s = p[4], wv = p[6];
          if (pass == 0 && (n * e * s != 0 || e * s * wv != 0)) continue;
          if (pass == 1 && (n * e * wv != 0 || n * s * wv != 0)) continue;
          doomed.emplace_back(i, j);
        }
      }
      for (const auto& [r, c] : doomed) img(r, c) = 0;
      changed = changed || !doomed.empty();
    }
  }
  // Thinning erases small even-sized blobs outright; keep their most central pixel.
  Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(h, w);
  std::vector<std::pair<int, int>> blob;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      if (!mask(i, j) || seen(i, j)) continue;
      blob.assign(1, {i, j});
      seen(i, j) = 1;
      bool kept = false;
      for (std::size_t q = 0; q < blob.size(); ++q) {
        const auto [r, c] = blob[q];
        kept = kept || img(r, c);
        for (const auto& d : kN8) {
          const int rr = r + d[0], cc = c + d[1];
          if (rr < 0 || rr >= h || cc < 0 || cc >= w || !mask(rr, cc) || seen(rr, cc)) continue;
          seen(rr, cc) = 1;
          blob.emplace_back(rr, cc);
        }
      }
      if (kept) continue;
      double mr = 0, mc = 0;
      for (const auto& [r, c] : blob) {
        mr += r;
        mc += c;
      }
      mr /= static_cast<double>(blob.size());
      mc /= static_cast<double>(blob.size());
      const auto best = std::min_element(blob.begin(), blob.end(), [&](const auto& a, const auto& b) {
        return std::hypot(a.first - mr, a.second - mc) < std::hypot(b.first - mr, b.second - mc);
      });
      img(best->first, best->second) = 1;
    }
  }
  return img;
}

namespace {

struct SkeletonGraph {
  std::vector<Eigen::Vector2i> pixels;  // (row, col)
  std::vector<std::vector<std::pair<int, double>>> adj;
  std::vector<bool> endpoint;
};

SkeletonGraph build_graph(const Mask& skel) {
  SkeletonGraph g;
  const int h = static_cast<int>(skel.rows()), w = static_cast<int>(skel.cols());
  Eigen::MatrixXi index = Eigen::MatrixXi::Constant(h, w, -1);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      if (skel(i, j)) {
        index(i, j) = static_cast<int>(g.pixels.size());
        g.pixels.emplace_back(i, j);
      }
    }
  }
  g.adj.resize(g.pixels.size());
  g.endpoint.resize(g.pixels.size());
  for (std::size_t k = 0; k < g.pixels.size(); ++k) {
    const int i = g.pixels[k].x(), j = g.pixels[k].y();
    int ring[8];
    int count = 0;
    for (int d = 0; d < 8; ++d) {
      const int r = i + kN8[static_cast<std::size_t>(d)][0], c = j + kN8[static_cast<std::size_t>(d)][1];
      const bool on = r >= 0 && r < h && c >= 0 && c < w && skel(r, c);
      ring[d] = on;
      if (on) {
        ++count;
        g.adj[k].emplace_back(index(r, c), (d % 2 == 0) ? 1.0 : std::numbers::sqrt2);
      }
    }
    // One contiguous run of neighbors around the ring marks a line end, which
    // also covers staircase ends with an orthogonal and a diagonal neighbor.
    int runs = 0;
    for (int d = 0; d < 8; ++d) runs += (ring[d] == 0 && ring[(d + 1) % 8] == 1);
    g.endpoint[k] = count >= 1 && count <= 3 && runs == 1;
  }
  return g;
}

std::vector<double> geodesic(const SkeletonGraph& g, const std::vector<bool>& active,
                             const std::vector<int>& sources, std::vector<int>* parent = nullptr) {
  std::vector<double> dist(g.pixels.size(), std::numeric_limits<double>::infinity());
  if (parent) parent->assign(g.pixels.size(), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  for (int s : sources) {
    dist[static_cast<std::size_t>(s)] = 0.0;
    queue.emplace(0.0, s);
  }
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    for (const auto& [v, wgt] : g.adj[static_cast<std::size_t>(u)]) {
      if (!active[static_cast<std::size_t>(v)]) continue;
      const double nd = d + wgt;
      // Strict improvement, ties broken by lower index for determinism.
      auto& dv = dist[static_cast<std::size_t>(v)];
      if (nd < dv || (nd == dv && parent && u < (*parent)[static_cast<std::size_t>(v)])) {
        if (nd < dv) queue.emplace(nd, v);
        dv = nd;
        if (parent) (*parent)[static_cast<std::size_t>(v)] = u;
      }
    }
  }
  return dist;
}

using EndScore = std::function<double(const Eigen::Vector2d&)>;

Centerline order_impl(const Mask& skeleton, const EndScore& base_score, double spur_fraction) {
  if ((skeleton.array() == 0).all()) throw ValidationError("order_centerline: empty skeleton");
  SkeletonGraph g = build_graph(skeleton);
  const auto center = [&](int k) {
    const auto& p = g.pixels[static_cast<std::size_t>(k)];
    return Eigen::Vector2d(p.y() + 0.5, p.x() + 0.5);
  };
  if (g.pixels.size() == 1) {
    Centerline c;
    c.points = {center(0)};
    c.arc_length = {0.0};
    return c;
  }
  std::vector<bool> active(g.pixels.size(), true);
  const auto endpoints = [&] {
    std::vector<int> ends;
    for (std::size_t k = 0; k < g.pixels.size(); ++k) {
      if (!active[k]) continue;
      int degree = 0;
      for (const auto& [v, wgt] : g.adj[k]) degree += active[static_cast<std::size_t>(v)];
      if (g.endpoint[k] || degree == 1) ends.push_back(static_cast<int>(k));
    }
    return ends;
  };
  if (endpoints().empty()) {
    throw ValidationError("order_centerline: skeleton is a closed loop with no endpoints");
  }

  std::vector<int> path;
  int pruned = 0;
  while (true) {
    const std::vector<int> ends = endpoints();
    int best_a = ends.front(), best_b = ends.front();
    double best_len = -1.0;
    for (int a : ends) {
      const auto dist = geodesic(g, active, {a});
      for (int b : ends) {
        const double d = dist[static_cast<std::size_t>(b)];
        if (std::isfinite(d) && d > best_len) {
          best_len = d;
          best_a = a;
          best_b = b;
        }
      }
    }
    std::vector<int> parent;
    geodesic(g, active, {best_a}, &parent);
    path.clear();
    for (int v = best_b; v != -1; v = parent[static_cast<std::size_t>(v)]) path.push_back(v);
    std::reverse(path.begin(), path.end());

    // Remove side branches hanging off the main path that are too short.
    std::vector<int> to_path;
    const auto dist = geodesic(g, active, path, &to_path);
    std::vector<bool> on_path(g.pixels.size(), false);
    for (int v : path) on_path[static_cast<std::size_t>(v)] = true;
    bool removed = false;
    for (int e : ends) {
      const auto ue = static_cast<std::size_t>(e);
      if (on_path[ue] || !std::isfinite(dist[ue])) continue;
      if (dist[ue] >= spur_fraction * best_len) continue;
      for (int v = e; v != -1 && !on_path[static_cast<std::size_t>(v)];
           v = to_path[static_cast<std::size_t>(v)]) {
        active[static_cast<std::size_t>(v)] = false;
      }
      ++pruned;
      removed = true;
    }
    if (!removed) break;
  }

  Centerline c;
  c.pruned_spurs = pruned;
  for (int v : path) c.points.push_back(center(v));
  if (base_score(c.points.back()) < base_score(c.points.front())) {
    std::reverse(c.points.begin(), c.points.end());
  }
  c.arc_length.push_back(0.0);
  for (std::size_t k = 1; k < c.points.size(); ++k) {
    c.arc_length.push_back(c.arc_length.back() + (c.points[k] - c.points[k - 1]).norm());
  }
  return c;
}

}  // namespace

Centerline order_centerline(const Mask& skeleton, const Eigen::Vector2d& base_hint,
                            double spur_fraction) {
  return order_impl(
      skeleton, [&](const Eigen::Vector2d& p) { return (p - base_hint).squaredNorm(); },
      spur_fraction);
}

Centerline order_centerline(const Mask& skeleton, BorderSide base_side, double spur_fraction) {
  const double w = static_cast<double>(skeleton.cols()), h = static_cast<double>(skeleton.rows());
  return order_impl(
      skeleton,
      [=](const Eigen::Vector2d& p) {
        switch (base_side) {
          case BorderSide::kLeft: return p.x();
          case BorderSide::kRight: return w - p.x();
          case BorderSide::kTop: return p.y();
          case BorderSide::kBottom: break;
        }
        return h - p.y();
      },
      spur_fraction);
}

std::vector<Keypoint> extract_keypoints(const Centerline& centerline, int count) {
  if (count < 1) throw ValidationError("extract_keypoints: need at least one keypoint");
  if (static_cast<int>(centerline.points.size()) < count + 1 || !(centerline.length() > 0)) {
    throw ValidationError("extract_keypoints: centerline has " +
                          std::to_string(centerline.points.size()) + " points, need " +
                          std::to_string(count + 1));
  }
  std::vector<Keypoint> out;
  const double total = centerline.length();
  std::size_t seg = 1;
  for (int i = 1; i <= count; ++i) {
    const double s = static_cast<double>(i) / count;
    const double target = s * total;
    while (seg + 1 < centerline.points.size() && centerline.arc_length[seg] < target) ++seg;
    const double l0 = centerline.arc_length[seg - 1], l1 = centerline.arc_length[seg];
    const double w = l1 > l0 ? std::clamp((target - l0) / (l1 - l0), 0.0, 1.0) : 1.0;
    out.push_back({s, (1.0 - w) * centerline.points[seg - 1] + w * centerline.points[seg]});
  }
  return out;
}

Centerline extend_to_boundary(const Centerline& centerline, const Mask& mask, double lookback) {
  const std::size_t n = centerline.points.size();
  if (n < 2) return centerline;
  const auto inside = [&](const Eigen::Vector2d& p) {
    const double col = std::floor(p.x()), row = std::floor(p.y());
    return row >= 0 && col >= 0 && row < mask.rows() && col < mask.cols() &&
           mask(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) != 0;
  };
  const double total = centerline.length();
  // Point `d` pixels of arc back from one end.
  const auto at_arc = [&](bool from_tip, double d) {
    const double target = from_tip ? total - d : d;
    const auto it = std::lower_bound(centerline.arc_length.begin(), centerline.arc_length.end(),
                                     std::clamp(target, 0.0, total));
    const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(it - centerline.arc_length.begin()), 1, n - 1);
    const double l0 = centerline.arc_length[k - 1], l1 = centerline.arc_length[k];
    const double w = l1 > l0 ? std::clamp((target - l0) / (l1 - l0), 0.0, 1.0) : 0.0;
    return Eigen::Vector2d((1.0 - w) * centerline.points[k - 1] + w * centerline.points[k]);
  };
  // Direction from the stretch [3 * lookback, lookback] before the end; the
  // last few thinned pixels veer toward corners.
  const auto march = [&](bool from_tip) {
    const Eigen::Vector2d end = from_tip ? centerline.points.back() : centerline.points.front();
    if (total < 3.0 * lookback) return end;
    const Eigen::Vector2d anchor = at_arc(from_tip, lookback);
    Eigen::Vector2d dir = anchor - at_arc(from_tip, 3.0 * lookback);
    if (!(dir.norm() > 0)) return end;
    dir.normalize();
    constexpr double kStep = 0.05;
    Eigen::Vector2d p = anchor;
    while (inside(p + kStep * dir)) p += kStep * dir;
    // The last inside sample lies within one step of the pixel edge.
    const Eigen::Vector2d hit = p + 0.5 * kStep * dir;
    return (hit - anchor).norm() > (end - anchor).norm() ? hit : end;
  };
  Centerline out;
  out.pruned_spurs = centerline.pruned_spurs;
  const Eigen::Vector2d head = march(false);
  const Eigen::Vector2d tail = march(true);
  if ((head - centerline.points.front()).norm() > 1e-9) out.points.push_back(head);
  out.points.insert(out.points.end(), centerline.points.begin(), centerline.points.end());
  if ((tail - centerline.points.back()).norm() > 1e-9) out.points.push_back(tail);
  out.arc_length.assign(out.points.size(), 0.0);
  for (std::size_t k = 1; k < out.points.size(); ++k) {
    out.arc_length[k] = out.arc_length[k - 1] + (out.points[k] - out.points[k - 1]).norm();
  }
  return out;
}

namespace {

// Felzenszwalb-Huttenlocher lower envelope of parabolas, squared distances.
void edt_1d(const double* f, int n, std::ptrdiff_t stride, double* out, std::vector<int>& v,
            std::vector<double>& z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    const double fq = f[q * stride];
    if (fq == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    while (true) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((fq + q * q) - (f[p * stride] + p * p)) / (2.0 * (q - p));
      if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= z[static_cast<std::size_t>(k)]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = kInf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) out[q * stride] = kInf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    out[q * stride] = (q - p) * static_cast<double>(q - p) + f[p * stride];
  }
}

}  // namespace

Eigen::MatrixXd distance_map(const Mask& mask, double gamma) {
  if (!(gamma > 0)) throw ValidationError("distance_map: gamma must be positive");
  if (mask.size() == 0 || (mask.array() == 0).all()) {
    throw ValidationError("distance_map: mask has no positive pixel");
  }
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  Eigen::MatrixXd f(h, w);
  for (Eigen::Index k = 0; k < mask.size(); ++k) {
    f(k) = mask(k) ? 0.0 : std::numeric_limits<double>::infinity();
  }
  Eigen::MatrixXd tmp(h, w);
  std::vector<int> v;
  std::vector<double> z;
  // Column-major storage: a column is contiguous, a row has stride h.
  for (int j = 0; j < w; ++j) edt_1d(f.data() + static_cast<std::ptrdiff_t>(j) * h, h, 1, tmp.data() + static_cast<std::ptrdiff_t>(j) * h, v, z);
  Eigen::MatrixXd out(h, w);
  for (int i = 0; i < h; ++i) edt_1d(tmp.data() + i, w, h, out.data() + i, v, z);
  return (out.array().sqrt() / gamma).matrix();
}

}  // namespace primfit
