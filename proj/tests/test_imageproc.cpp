#include "primfit/errors.hpp"
#include "primfit/imageproc.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

namespace primfit {
namespace {

Mask bar(int rows, int cols, int pad) {
  Mask m = Mask::Zero(rows + 2 * pad, cols + 2 * pad);
  m.block(pad, pad, rows, cols).setOnes();
  return m;
}

Centerline straight_centerline(int length) {
  Centerline c;
  for (int k = 0; k <= length; ++k) {
    c.points.emplace_back(k + 0.5, 0.5);
    c.arc_length.push_back(k);
  }
  return c;
}

RgbImage uniform_image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RgbImage img{w, h, {}};
  for (int k = 0; k < w * h; ++k) img.data.insert(img.data.end(), {r, g, b});
  return img;
}

void paint(RgbImage& img, int r0, int c0, int rows, int cols, std::uint8_t r, std::uint8_t g,
           std::uint8_t b) {
  for (int i = r0; i < r0 + rows; ++i) {
    for (int j = c0; j < c0 + cols; ++j) {
      std::uint8_t* p = img.data.data() + 3 * (i * img.width + j);
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
  }
}

const HsvRange kRed{340.0, 20.0, 0.5, 1.0, 0.3, 1.0};

TEST(Hsv, PrimaryColors) {
  EXPECT_TRUE(rgb_to_hsv(255, 0, 0).isApprox(Eigen::Vector3d(0, 1, 1)));
  EXPECT_TRUE(rgb_to_hsv(0, 255, 0).isApprox(Eigen::Vector3d(120, 1, 1)));
  EXPECT_TRUE(rgb_to_hsv(0, 0, 255).isApprox(Eigen::Vector3d(240, 1, 1)));
  const Eigen::Vector3d gray = rgb_to_hsv(128, 128, 128);
  EXPECT_DOUBLE_EQ(gray.y(), 0.0);
  EXPECT_NEAR(gray.z(), 128.0 / 255.0, 1e-12);
}

TEST(ColorSegment, UniformInsideRange) {
  const Mask m = color_segment(uniform_image(12, 9, 230, 10, 20), kRed);
  EXPECT_TRUE((m.array() == 1).all());
}

TEST(ColorSegment, UniformOutsideRangeIsEmpty) {
  EXPECT_THROW((void)color_segment(uniform_image(12, 9, 10, 200, 20), kRed), ValidationError);
}

TEST(ColorSegment, KeepsLargestBlobAndFillsHoles) {
  RgbImage img = uniform_image(40, 30, 20, 20, 20);
  paint(img, 2, 2, 10, 10, 250, 0, 0);   // 100 px
  paint(img, 20, 25, 5, 6, 250, 0, 0);   // 30 px
  paint(img, 6, 6, 2, 2, 20, 20, 20);    // hole inside the big blob
  const Mask m = color_segment(img, kRed);
  EXPECT_EQ(m.cast<int>().sum(), 100);
  EXPECT_EQ(m(7, 7), 1);
  EXPECT_EQ(m(22, 27), 0);
}

TEST(ColorSegment, HueRangeWraps) {
  const Mask m = color_segment(uniform_image(4, 4, 255, 0, 40), kRed);
  EXPECT_EQ(m.cast<int>().sum(), 16);
}

TEST(ColorSegment, MalformedImageRejected) {
  RgbImage img{4, 4, std::vector<std::uint8_t>(10, 0)};
  EXPECT_THROW((void)color_segment(img, kRed), ValidationError);
}

TEST(Components, LargestMatchesBruteForce) {
  std::mt19937 rng(21);
  for (int k = 0; k < 50; ++k) {
    std::bernoulli_distribution coin(0.45);
    Mask m(20, 20);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = coin(rng);
    const Mask got = largest_component(m);
    const Mask want = oracle::largest_component(m);
    // Ties may resolve to a different component of the same size.
    EXPECT_EQ(got.cast<int>().sum(), want.cast<int>().sum());
    const Eigen::MatrixXi labels = oracle::component_labels(m);
    std::set<int> used;
    for (Eigen::Index i = 0; i < got.size(); ++i) {
      if (got(i)) used.insert(labels(i));
    }
    EXPECT_EQ(used.size(), 1u);
  }
}

TEST(Components, FillHoles) {
  Mask ring = bar(7, 7, 1);
  ring.block(3, 3, 3, 3).setZero();
  const Mask filled = fill_holes(ring);
  EXPECT_EQ(filled, bar(7, 7, 1));
  Mask notch = bar(7, 7, 1);
  notch.block(0, 4, 4, 1).setZero();
  EXPECT_EQ(fill_holes(notch), notch);
}

TEST(Skeleton, HorizontalBarIsMidline) {
  const Mask s = skeletonize(bar(3, 21, 2));
  const int mid = 3;
  int count = 0, first = 1000, last = -1;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (!s(i, j)) continue;
      EXPECT_EQ(i, mid);
      ++count;
      first = std::min(first, int(j));
      last = std::max(last, int(j));
    }
  }
  EXPECT_EQ(last - first + 1, count);  // contiguous
  EXPECT_NEAR(count, 19, 1);
}

TEST(Skeleton, SinglePixel) {
  Mask m = Mask::Zero(5, 5);
  m(2, 3) = 1;
  EXPECT_EQ(skeletonize(m), m);
}

TEST(Skeleton, DiskShrinksToCenter) {
  Mask m = Mask::Zero(21, 21);
  for (int i = 0; i < 21; ++i) {
    for (int j = 0; j < 21; ++j) m(i, j) = std::hypot(i - 10, j - 10) <= 5.0;
  }
  const Mask s = skeletonize(m);
  ASSERT_GT(s.cast<int>().sum(), 0);
  for (int i = 0; i < 21; ++i) {
    for (int j = 0; j < 21; ++j) {
      if (s(i, j)) EXPECT_LE(std::hypot(i - 10, j - 10), 1.5);
    }
  }
}

TEST(Skeleton, SubsetAndConnectivityOnRandomBlobs) {
  std::mt19937 rng(8);
  for (int k = 0; k < 30; ++k) {
    const Mask m = oracle::random_blobs(rng, 32, 32, 3);
    const Mask s = skeletonize(m);
    EXPECT_TRUE(((s.array() == 0) || (m.array() == 1)).all());
    EXPECT_EQ(oracle::count_components_8(s), oracle::count_components_8(m));
  }
}

TEST(Skeleton, EmptyRejected) {
  EXPECT_THROW((void)skeletonize(Mask::Zero(4, 4)), ValidationError);
}

TEST(Centerline, StraightOrderedFromHint) {
  Mask s = Mask::Zero(5, 30);
  s.row(2).segment(3, 20).setOnes();
  const Centerline c = order_centerline(s, Eigen::Vector2d(0, 2));
  ASSERT_EQ(c.points.size(), 20u);
  EXPECT_TRUE(c.points.front().isApprox(Eigen::Vector2d(3.5, 2.5)));
  EXPECT_TRUE(c.points.back().isApprox(Eigen::Vector2d(22.5, 2.5)));
  EXPECT_DOUBLE_EQ(c.length(), 19.0);
  const Centerline r = order_centerline(s, Eigen::Vector2d(29, 2));
  EXPECT_TRUE(r.points.front().isApprox(Eigen::Vector2d(22.5, 2.5)));
  const Centerline side = order_centerline(s, BorderSide::kRight);
  EXPECT_TRUE(side.points.front().isApprox(Eigen::Vector2d(22.5, 2.5)));
}

TEST(Centerline, ConsecutivePointsAreEightConnected) {
  Mask s = Mask::Zero(30, 30);
  for (int k = 0; k < 25; ++k) s(2 + k, 2 + k / 2) = 1;
  const Centerline c = order_centerline(s, Eigen::Vector2d(0, 0));
  for (std::size_t k = 1; k < c.points.size(); ++k) {
    const Eigen::Vector2d d = (c.points[k] - c.points[k - 1]).cwiseAbs();
    EXPECT_LE(d.maxCoeff(), 1.0);
    EXPECT_GT(c.arc_length[k], c.arc_length[k - 1]);
  }
}

TEST(Centerline, ShortSpurPruned) {
  Mask s = Mask::Zero(10, 70);
  s.row(5).segment(2, 60).setOnes();
  s(4, 30) = 1;
  s(3, 30) = 1;
  const Centerline c = order_centerline(s, Eigen::Vector2d(0, 5));
  EXPECT_EQ(c.pruned_spurs, 1);
  EXPECT_EQ(c.points.size(), 60u);
  for (const auto& p : c.points) EXPECT_DOUBLE_EQ(p.y(), 5.5);
}

TEST(Centerline, LongBranchKept) {
  Mask s = Mask::Zero(30, 70);
  s.row(5).segment(2, 60).setOnes();
  for (int k = 1; k <= 20; ++k) s(5 + k, 30) = 1;
  const Centerline c = order_centerline(s, Eigen::Vector2d(0, 5));
  EXPECT_EQ(c.pruned_spurs, 0);
}

TEST(Centerline, ClosedLoopRejected) {
  Mask s = Mask::Zero(9, 9);
  for (int k = 2; k <= 6; ++k) {
    s(2, k) = s(6, k) = s(k, 2) = s(k, 6) = 1;
  }
  EXPECT_THROW((void)order_centerline(s, Eigen::Vector2d(0, 0)), ValidationError);
}

TEST(Centerline, ExtendReachesMaskEnds) {
  const Mask m = bar(5, 40, 3);
  const Centerline inner = order_centerline(skeletonize(m), BorderSide::kLeft);
  const Centerline ext = extend_to_boundary(inner, m);
  EXPECT_NEAR(ext.points.front().x(), 3.0, 0.1);
  EXPECT_NEAR(ext.points.back().x(), 43.0, 0.1);
  EXPECT_NEAR(ext.points.front().y(), 5.5, 1e-9);
  EXPECT_GT(ext.length(), inner.length());
  for (std::size_t k = 1; k < ext.points.size(); ++k) EXPECT_GE(ext.arc_length[k], ext.arc_length[k - 1]);
}

TEST(Keypoints, FractionsExact) {
  const Centerline c = straight_centerline(37);
  for (int count : {1, 2, 3, 4, 7}) {
    const auto kp = extract_keypoints(c, count);
    ASSERT_EQ(kp.size(), std::size_t(count));
    for (int i = 1; i <= count; ++i) EXPECT_EQ(kp[i - 1].s, double(i) / count);
  }
}

TEST(Keypoints, SingleIsTip) {
  const Centerline c = straight_centerline(10);
  const auto kp = extract_keypoints(c, 1);
  EXPECT_TRUE(kp[0].pixel.isApprox(c.points.back()));
}

TEST(Keypoints, QuartersOfStraightLine) {
  const auto kp = extract_keypoints(straight_centerline(100), 4);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(kp[i].pixel.x() - 0.5, 25.0 * (i + 1), 1e-12);
}

TEST(Keypoints, LieOnPolylineAndMonotone) {
  Mask s = Mask::Zero(40, 40);
  for (int k = 0; k < 30; ++k) s(5 + k, 5 + (k * k) / 40) = 1;
  const Centerline c = order_centerline(s, Eigen::Vector2d(0, 0));
  const auto kp = extract_keypoints(c, 4);
  double prev = -1.0;
  for (const auto& k : kp) {
    double best = 1e9, arc = 0;
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      const Eigen::Vector2d a = c.points[i - 1], e = c.points[i] - a;
      const double t = std::clamp((k.pixel - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
      const double d = (k.pixel - a - t * e).norm();
      if (d < best) {
        best = d;
        arc = c.arc_length[i - 1] + t * e.norm();
      }
    }
    EXPECT_LT(best, 1e-9);
    EXPECT_GT(arc, prev);
    EXPECT_NEAR(arc, k.s * c.length(), 1e-9);
    prev = arc;
  }
}

TEST(Keypoints, TooFewPointsRejected) {
  EXPECT_THROW((void)extract_keypoints(straight_centerline(2), 4), ValidationError);
  EXPECT_THROW((void)extract_keypoints(straight_centerline(10), 0), ValidationError);
}

TEST(DistanceMap, SinglePixel) {
  Mask m = Mask::Zero(3, 3);
  m(1, 1) = 1;
  const Eigen::MatrixXd d = distance_map(m, 1.0);
  EXPECT_EQ(d(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(d(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(d(1, 2), 1.0);
  EXPECT_DOUBLE_EQ(d(0, 0), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(d(2, 2), std::sqrt(2.0));
}

TEST(DistanceMap, AllOnesIsZero) {
  EXPECT_TRUE(distance_map(Mask::Ones(5, 4), 100.0).isZero());
}

TEST(DistanceMap, EmptyOrBadGammaRejected) {
  EXPECT_THROW((void)distance_map(Mask::Zero(5, 4), 1.0), ValidationError);
  EXPECT_THROW((void)distance_map(Mask::Ones(5, 4), 0.0), ValidationError);
}

TEST(DistanceMap, MatchesBruteForce) {
  std::mt19937 rng(31);
  for (int k = 0; k < 100; ++k) {
    std::bernoulli_distribution coin(std::uniform_real_distribution<double>(0.01, 0.3)(rng));
    Mask m(16, 16);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = coin(rng);
    if (m.cast<int>().sum() == 0) m(k % 16, (3 * k) % 16) = 1;
    const Eigen::MatrixXd d = distance_map(m, 1.0);
    EXPECT_LE((d - oracle::brute_distance_map(m, 1.0)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((distance_map(m, 100.0) - d / 100.0).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DistanceMap, NonSquare) {
  std::mt19937 rng(32);
  const Mask m = oracle::random_blobs(rng, 13, 29, 1);
  ASSERT_GT(m.cast<int>().sum(), 0);
  EXPECT_LE((distance_map(m, 3.0) - oracle::brute_distance_map(m, 3.0)).cwiseAbs().maxCoeff(), 1e-9);
}

}  // namespace
}  // namespace primfit
