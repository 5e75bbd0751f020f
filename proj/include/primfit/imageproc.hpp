#pragma once

// Reference-image preprocessing: segmentation, thinning, centerline keypoints
// and the distance map. None of this is differentiated.

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace primfit {

/// Binary image, values exactly 0 or 1, indexed (row, column).
using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major, 3 bytes per pixel

  [[nodiscard]] const std::uint8_t* at(int row, int col) const {
    return data.data() + 3 * (static_cast<std::size_t>(row) * width + col);
  }
};

/// Inclusive channel ranges. Hue in degrees; a range with hue_lo > hue_hi wraps
/// through 0. Saturation and value in [0, 1].
struct HsvRange {
  double hue_lo = 0.0;
  double hue_hi = 360.0;
  double sat_lo = 0.0;
  double sat_hi = 1.0;
  double val_lo = 0.0;
  double val_hi = 1.0;
};

Eigen::Vector3d rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Threshold, keep the largest 4-connected component, fill holes. Throws
/// ValidationError when nothing survives.
Mask color_segment(const RgbImage& image, const HsvRange& range);

Mask largest_component(const Mask& mask);
Mask fill_holes(const Mask& mask);

/// Zhang-Suen thinning. Pixels on the image border are treated as background
/// neighbors.
Mask skeletonize(const Mask& mask);

/// Ordered centerline, base first. Points are pixel centers (u, v).
struct Centerline {
  std::vector<Eigen::Vector2d> points;
  std::vector<double> arc_length;  // cumulative, starts at 0
  int pruned_spurs = 0;

  [[nodiscard]] double length() const { return arc_length.empty() ? 0.0 : arc_length.back(); }
};

enum class BorderSide { kLeft, kRight, kTop, kBottom };

/// Longest geodesic path between skeleton endpoints, oriented so the first
/// point is the end nearest `base_hint`. Side branches shorter than
/// `spur_fraction` of the main path are pruned first.
Centerline order_centerline(const Mask& skeleton, const Eigen::Vector2d& base_hint,
                            double spur_fraction = 0.05);
/// Same, with the base being the end closest to an image border.
Centerline order_centerline(const Mask& skeleton, BorderSide base_side,
                            double spur_fraction = 0.05);

/// Extends both ends along their local direction (measured `lookback` pixels
/// back) to the edge of `mask`.
Centerline extend_to_boundary(const Centerline& centerline, const Mask& mask, double lookback = 5.0);

struct Keypoint {
  double s = 0.0;          // curve parameter paired with this point
  Eigen::Vector2d pixel;   // (u, v)
};

/// Points at arc-length fractions i/K, i = 1..K; the last one is the tip.
std::vector<Keypoint> extract_keypoints(const Centerline& centerline, int count);

/// Exact Euclidean distance to the nearest positive pixel, divided by gamma.
Eigen::MatrixXd distance_map(const Mask& mask, double gamma);

}  // namespace primfit
