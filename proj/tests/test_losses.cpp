#include "primfit/losses.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace primfit {
namespace {

const CameraModel kCam{100, 100, 50, 50, 100, 100};

Matrix random_image(std::mt19937& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

Matrix random_binary(std::mt19937& rng, int h, int w) {
  std::bernoulli_distribution coin(0.4);
  Matrix m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = coin(rng);
  return m;
}

Matrix arm_control() {
  Matrix c(3, 3);
  c << -0.1, 0.0, 1.0, 0.0, 0.05, 1.1, 0.1, 0.0, 1.0;
  return c;
}

TEST(MaskLoss, Examples) {
  std::mt19937 rng(1);
  const Matrix m = random_binary(rng, 8, 8);
  Tape t;
  EXPECT_DOUBLE_EQ(mask_loss(t.leaf(m), m).scalar(), 0.0);
  EXPECT_DOUBLE_EQ(mask_loss(t.leaf(Matrix::Zero(8, 8)), m).scalar(), m.sum());
  const Matrix s = random_image(rng, 8, 8);
  const Var sv = t.leaf(s);
  t.backward(mask_loss(sv, m));
  EXPECT_TRUE(sv.grad().isApprox(2.0 * (s - m)));
}

TEST(DistLoss, Examples) {
  Matrix d = Matrix::Zero(4, 4);
  d(1, 1) = 0.07;
  d(2, 3) = 0.5;
  Tape t;
  Matrix s = Matrix::Zero(4, 4);
  s(0, 0) = 0.9;  // on a zero-distance pixel
  EXPECT_DOUBLE_EQ(dist_loss(t.leaf(s), d).scalar(), 0.0);
  s(1, 1) = 1.0;
  const Var sv = t.leaf(s);
  const Var l = dist_loss(sv, d);
  EXPECT_DOUBLE_EQ(l.scalar(), 0.07);
  t.backward(l);
  EXPECT_TRUE(sv.grad().isApprox(d));
}

TEST(DistLoss, DecreasesAsBlobApproachesConvexMask) {
  Mask ref = Mask::Zero(32, 48);
  ref.block(10, 30, 10, 10).setOnes();
  const Matrix d = distance_map(ref, 100.0);
  double prev = std::numeric_limits<double>::infinity();
  for (int col = 0; col <= 30; col += 2) {
    Matrix s = Matrix::Zero(32, 48);
    s.block(12, col, 6, 6).setConstant(0.8);
    Tape t;
    const double v = dist_loss(t.leaf(s), d).scalar();
    EXPECT_LT(v, prev) << col;
    prev = v;
  }
  EXPECT_NEAR(prev, 0.0, 1e-12);
}

TEST(AppearanceLoss, Examples) {
  Tape t;
  Matrix m = Matrix::Zero(10, 20);
  m.leftCols(10).setOnes();  // 100
  EXPECT_DOUBLE_EQ(appearance_loss(t.leaf(m), m).scalar(), 0.0);
  const Var s = t.leaf(Matrix::Constant(10, 20, 0.6));  // 120
  const Var l = appearance_loss(s, m);
  EXPECT_NEAR(l.scalar(), 20.0, 1e-12);
  t.backward(l);
  EXPECT_TRUE(s.grad().isApprox(Matrix::Ones(10, 20)));
  const Var eq = t.leaf(Matrix::Constant(10, 20, 0.5));
  t.backward(appearance_loss(eq, m));
  EXPECT_TRUE(eq.grad().isZero());
}

TEST(ImageLosses, DimensionMismatch) {
  Tape t;
  const Var s = t.leaf(Matrix::Zero(4, 5));
  EXPECT_THROW((void)mask_loss(s, Matrix::Zero(5, 4)), ValidationError);
  EXPECT_THROW((void)dist_loss(s, Matrix::Zero(4, 4)), ValidationError);
  EXPECT_THROW((void)appearance_loss(s, Matrix::Zero(3, 5)), ValidationError);
}

TEST(ImageLosses, GradientsOnRandomInstances) {
  std::mt19937 rng(3);
  for (int k = 0; k < 10; ++k) {
    const Matrix m = random_binary(rng, 16, 16);
    const Matrix d = random_image(rng, 16, 16);
    const Matrix s0 = random_image(rng, 16, 16);
    EXPECT_LT(grad_check([&](Tape&, const Var& s) { return mask_loss(s, m); }, s0, 1e-5), 1e-6);
    EXPECT_LT(grad_check([&](Tape&, const Var& s) { return dist_loss(s, d); }, s0, 1e-5), 1e-6);
    EXPECT_LT(grad_check([&](Tape&, const Var& s) { return appearance_loss(s, m); }, s0, 1e-5), 1e-6);
  }
}

TEST(KeypointLoss, ZeroAtExactProjection) {
  const Matrix c = arm_control();
  std::vector<Keypoint> kp;
  for (double s : {0.25, 0.5, 1.0}) {
    const Eigen::Vector3d p = bezier_point<double>(c.row(0).transpose(), c.row(1).transpose(),
                                                   c.row(2).transpose(), s);
    kp.push_back({s, project<double>(kCam, p)});
  }
  Tape t;
  const KeypointTerm term = keypoint_loss(t.leaf(c), kCam, kp);
  EXPECT_NEAR(term.value.scalar(), 0.0, 1e-12);
  EXPECT_EQ(term.behind_camera, 0);
}

TEST(KeypointLoss, ThreeFourFive) {
  // Tip at (-0.4, -0.4, 1) projects to (10, 10).
  Matrix c(3, 3);
  c << 0, 0, 1, -0.2, -0.2, 1, -0.4, -0.4, 1;
  Tape t;
  const KeypointTerm term = keypoint_loss(t.leaf(c), kCam, {{1.0, {13.0, 14.0}}});
  EXPECT_NEAR(term.value.scalar(), 5.0, 1e-12);
}

TEST(KeypointLoss, GradientMatchesFiniteDifferences) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> px(10, 90);
  for (int k = 0; k < 10; ++k) {
    std::vector<Keypoint> kp;
    for (int i = 1; i <= 4; ++i) kp.push_back({i / 4.0, {px(rng), px(rng)}});
    Matrix c = arm_control() + 0.05 * Matrix::Random(3, 3);
    const auto f = [&](Tape&, const Var& cv) { return keypoint_loss(cv, kCam, kp).value; };
    EXPECT_LT(grad_check(f, c, 1e-7), 1e-4);
  }
}

TEST(KeypointLoss, BehindCameraPenaltyWithoutGradient) {
  Matrix c = arm_control();
  c(2, 2) = -1.0;  // tip far behind the camera
  Tape t;
  const Var cv = t.leaf(c);
  const KeypointTerm term = keypoint_loss(cv, kCam, {{1.0, {50.0, 50.0}}});
  EXPECT_EQ(term.behind_camera, 1);
  EXPECT_DOUBLE_EQ(term.value.scalar(), kBehindCameraPenalty);
  t.backward(term.value);
  EXPECT_TRUE(cv.grad().isZero());
}

TEST(KeypointLoss, Rejections) {
  Tape t;
  EXPECT_THROW((void)keypoint_loss(t.leaf(arm_control()), kCam, {}), ValidationError);
  EXPECT_THROW((void)keypoint_loss(t.leaf(Matrix::Zero(2, 3)), kCam, {{1.0, {0, 0}}}), ValidationError);
  EXPECT_THROW((void)keypoint_loss(t.leaf(arm_control()), kCam, {{1.5, {0, 0}}}), ValidationError);
}

TEST(ProjectedArc, StraightFrontoParallelLineIsIdentity) {
  Matrix c(3, 3);
  c << -0.2, 0, 1, 0, 0, 1, 0.2, 0, 1;
  const auto s = projected_arc_parameters(c, kCam, {0.25, 0.5, 1.0});
  EXPECT_NEAR(s[0], 0.25, 1e-9);
  EXPECT_NEAR(s[1], 0.5, 1e-9);
  EXPECT_NEAR(s[2], 1.0, 1e-12);
}

TEST(ProjectedArc, UnevenControlSpacingShiftsParameters) {
  // c1 near c0 makes the curve slow at the start, so half the arc needs s > 1/2.
  Matrix c(3, 3);
  c << -0.2, 0, 1, -0.15, 0, 1, 0.2, 0, 1;
  const auto s = projected_arc_parameters(c, kCam, {0.5}, 4096);
  // x(s) = -0.2 + 0.1 s + 0.3 s^2, so x = 0 at s = (-0.1 + sqrt(0.01 + 0.24)) / 0.6.
  EXPECT_NEAR(s[0], (-0.1 + std::sqrt(0.25)) / 0.6, 1e-4);
}

TEST(Weights, DefaultsAndValidation) {
  const LossWeights shape = LossWeights::shape_defaults();
  EXPECT_EQ(shape.mask, 1.0);
  EXPECT_EQ(shape.keypoint, 100.0);
  const LossWeights pose = LossWeights::pose_defaults();
  EXPECT_EQ(pose.mask, 1.0);
  EXPECT_EQ(pose.dist, 1.0);
  EXPECT_EQ(pose.app, 1.0);
  EXPECT_THROW((LossWeights{-1, 0, 0, 0}.validate()), ValidationError);
  EXPECT_THROW((LossWeights{0, 0, 0, 0}.validate()), ValidationError);
}

TEST(ShapeLoss, WeightedSumAndReduction) {
  std::mt19937 rng(6);
  const Matrix m = random_binary(rng, 100, 100);
  const Matrix s = random_image(rng, 100, 100);
  const std::vector<Keypoint> kp{{0.5, {40, 45}}, {1.0, {80, 52}}};
  Tape t;
  const Var sv = t.leaf(s), cv = t.leaf(arm_control());
  const LossBreakdown full = shape_loss(sv, m, cv, kCam, kp, LossWeights::shape_defaults());
  EXPECT_NEAR(full.total.scalar(), full.mask + 100.0 * full.keypoint, 1e-9);
  const LossBreakdown only = shape_loss(sv, m, cv, kCam, kp, LossWeights{1, 0, 0, 0});
  EXPECT_NEAR(only.total.scalar(), mask_loss(sv, m).scalar(), 1e-12);
  const LossBreakdown doubled = shape_loss(sv, m, cv, kCam, kp, LossWeights{2, 200, 0, 0});
  EXPECT_NEAR(doubled.total.scalar(), 2 * full.total.scalar(), 1e-9);
}

TEST(ShapeLoss, PerfectFitIsZero) {
  std::mt19937 rng(7);
  const Matrix m = random_binary(rng, 100, 100);
  const Matrix c = arm_control();
  const Eigen::Vector3d tip = c.row(2).transpose();
  Tape t;
  const LossBreakdown l = shape_loss(t.leaf(m), m, t.leaf(c), kCam, {{1.0, project<double>(kCam, tip)}},
                                     LossWeights::shape_defaults());
  EXPECT_NEAR(l.total.scalar(), 0.0, 1e-12);
}

TEST(PoseLoss, WeightedSumAndReduction) {
  std::mt19937 rng(8);
  const Matrix m = random_binary(rng, 16, 16);
  Mask mb = m.cast<std::uint8_t>();
  const Matrix d = distance_map(mb, 100.0);
  const Matrix s = random_image(rng, 16, 16);
  Tape t;
  const Var sv = t.leaf(s);
  const LossBreakdown l = pose_loss(sv, m, d, LossWeights::pose_defaults());
  EXPECT_NEAR(l.total.scalar(), l.mask + l.dist + l.app, 1e-12);
  EXPECT_NEAR(l.dist, (s.array() * d.array()).sum(), 1e-12);
  EXPECT_NEAR(l.app, std::abs(s.sum() - m.sum()), 1e-12);
  const LossBreakdown only = pose_loss(sv, m, d, LossWeights{1, 0, 0, 0});
  EXPECT_NEAR(only.total.scalar(), l.mask, 1e-12);
  const LossBreakdown perfect = pose_loss(t.leaf(m), m, d, LossWeights::pose_defaults());
  EXPECT_NEAR(perfect.total.scalar(), 0.0, 1e-12);
  const auto f = [&](Tape&, const Var& sx) { return pose_loss(sx, m, d, LossWeights::pose_defaults()).total; };
  EXPECT_LT(grad_check(f, s, 1e-5), 1e-6);
}

}  // namespace
}  // namespace primfit
