#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "matfuse/error.hpp"
#include "matfuse/projection.hpp"

using namespace matfuse;

namespace {

CameraIntrinsics vga() { return {500.0, 500.0, 320.0, 240.0, 0.001}; }

Eigen::Matrix3d yaw(double a) {
  Eigen::Matrix3d r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

SemanticPointCloud sample_cloud(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  SemanticPointCloud c;
  c.labels = 2;
  for (int i = 0; i < n; ++i) {
    c.points.emplace_back(u(rng), u(rng), u(rng));
    c.colors.push_back({static_cast<std::uint8_t>(i), 0, 0});
    c.distributions.push_back(0.3);
    c.distributions.push_back(0.7);
  }
  return c;
}

}  // namespace

TEST(BackProject, PrincipalRay) {
  DepthImage d(480, 640, 0);
  d(240, 320) = 1000;
  const auto g = back_project(d, vga());
  const std::size_t i = 240 * 640 + 320;
  ASSERT_TRUE(g.valid[i]);
  EXPECT_NEAR((g.points[i] - Eigen::Vector3d(0, 0, 1.0)).norm(), 0.0, 1e-15);
}

TEST(BackProject, PinholeOffset) {
  DepthImage d(480, 640, 0);
  d(240, 420) = 2000;
  const auto g = back_project(d, vga());
  const auto& p = g.points[240 * 640 + 420];
  EXPECT_NEAR(p.x(), 0.4, 1e-12);
  EXPECT_NEAR(p.y(), 0.0, 1e-12);
  EXPECT_NEAR(p.z(), 2.0, 1e-12);
}

TEST(BackProject, ZeroIsInvalid) {
  DepthImage d(4, 4, 0);
  d(1, 1) = 500;
  const auto g = back_project(d, vga());
  EXPECT_EQ(g.valid_count(), 1u);
  EXPECT_FALSE(g.valid[0]);
}

TEST(BackProject, ProjectRoundTrip) {
  DepthImage d(30, 40, 0);
  std::mt19937_64 rng(3);
  for (auto& v : d.data()) v = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(0, 5000)(rng));
  const CameraIntrinsics k{60.0, 55.0, 19.5, 14.5, 0.001};
  const auto g = back_project(d, k);
  for (int v = 0; v < 30; ++v) {
    for (int u = 0; u < 40; ++u) {
      const std::size_t i = v * 40 + u;
      if (!g.valid[i]) continue;
      const auto px = project(g.points[i], k);
      EXPECT_NEAR(px.x(), u, 1e-9);
      EXPECT_NEAR(px.y(), v, 1e-9);
    }
  }
}

TEST(Intrinsics, Validation) {
  CameraIntrinsics k = vga();
  EXPECT_NO_THROW(k.validate());
  k.fx = 0.0;
  EXPECT_THROW(k.validate(), InvalidInput);
  k = vga();
  k.depth_scale = -1.0;
  EXPECT_THROW(k.validate(), InvalidInput);
}

TEST(SemanticCloud, AllInvalidIsEmpty) {
  const auto c = make_semantic_cloud(back_project(DepthImage(3, 3, 0), vga()), LabelDistributionImage(3, 3, 2, 0.5),
                                     RgbImage(3, 3));
  EXPECT_EQ(c.size(), 0u);
}

TEST(SemanticCloud, SingleValidPixel) {
  DepthImage d(2, 2, 0);
  d(1, 0) = 1200;
  LabelDistributionImage q(2, 2, 3, 0.0);
  for (std::size_t i = 0; i < 4; ++i) q.pixel(i)[0] = 1.0;
  q(1, 0, 0) = 0.2;
  q(1, 0, 2) = 0.8;
  RgbImage rgb(2, 2, 0);
  rgb(1, 0, 1) = 99;
  const auto c = make_semantic_cloud(back_project(d, vga()), q, rgb, "f");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.distribution(0)[2], 0.8);
  EXPECT_EQ(c.colors[0][1], 99);
  EXPECT_EQ(c.hard_label(0).first, 2);
  EXPECT_EQ(c.frame_id, "f");
}

TEST(SemanticCloud, RowMajorOrder) {
  DepthImage d(2, 2, 1000);
  d(0, 1) = 0;
  LabelDistributionImage q(2, 2, 2, 0.0);
  for (std::size_t i = 0; i < 4; ++i) q.pixel(i)[i % 2] = 1.0;
  const auto c = make_semantic_cloud(back_project(d, vga()), q, RgbImage(2, 2));
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.hard_label(0).first, 0);  // pixel 0
  EXPECT_EQ(c.hard_label(1).first, 0);  // pixel 2
  EXPECT_EQ(c.hard_label(2).first, 1);  // pixel 3
  EXPECT_NO_THROW(c.validate());
}

TEST(SemanticCloud, DimensionMismatch) {
  EXPECT_THROW(make_semantic_cloud(back_project(DepthImage(2, 2, 1), vga()), LabelDistributionImage(2, 3, 2, 0.5),
                                   RgbImage(2, 2)),
               InvalidInput);
}

TEST(Pose, Validation) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 0) = -1.0;  // reflection
  EXPECT_THROW(Pose{m}, InvalidInput);
  m = Eigen::Matrix4d::Identity();
  m(3, 0) = 0.1;
  EXPECT_THROW(Pose{m}, InvalidInput);
  m = Eigen::Matrix4d::Identity();
  m(0, 1) = 0.01;
  EXPECT_THROW(Pose{m}, InvalidInput);
  EXPECT_THROW(Pose::from_row_major(std::vector<double>(15, 0.0)), InvalidInput);
}

TEST(Pose, RowMajorRoundTrip) {
  const Pose p = Pose::from_rotation_translation(yaw(0.3), Eigen::Vector3d(1, 2, 3));
  const auto rm = p.row_major();
  EXPECT_EQ(rm[3], 1.0);
  EXPECT_EQ(rm[15], 1.0);
  EXPECT_TRUE(Pose::from_row_major(rm).matrix().isApprox(p.matrix(), 1e-15));
}

TEST(TransformCloud, Identity) {
  const auto c = sample_cloud(10, 1);
  const auto t = transform_cloud(c, Pose::identity());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(t.points[i], c.points[i]);
  EXPECT_EQ(t.distributions, c.distributions);
}

TEST(TransformCloud, Translation) {
  const auto c = sample_cloud(10, 2);
  const auto t = transform_cloud(c, Pose::from_rotation_translation(Eigen::Matrix3d::Identity(), {1, 0, 0}));
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(t.points[i].x(), c.points[i].x() + 1.0, 1e-15);
    EXPECT_EQ(t.points[i].y(), c.points[i].y());
  }
  EXPECT_EQ(t.colors, c.colors);
}

TEST(TransformCloud, YawQuarterTurn) {
  SemanticPointCloud c;
  c.labels = 1;
  c.points = {{1, 0, 0}};
  c.colors = {{0, 0, 0}};
  c.distributions = {1.0};
  const auto t = transform_cloud(c, Pose::from_rotation_translation(yaw(std::numbers::pi / 2), {0, 0, 0}));
  EXPECT_NEAR((t.points[0] - Eigen::Vector3d(0, 1, 0)).norm(), 0.0, 1e-12);
}

TEST(TransformCloud, InverseRoundTrip) {
  const auto c = sample_cloud(50, 3);
  const Pose p = Pose::from_rotation_translation(
      Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix(), {0.5, -1.0, 2.0});
  const auto back = transform_cloud(transform_cloud(c, p), p.inverse());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LE((back.points[i] - c.points[i]).cwiseAbs().maxCoeff(), 1e-9);
}
