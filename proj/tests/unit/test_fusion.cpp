#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "matfuse/error.hpp"
#include "matfuse/fusion.hpp"

using namespace matfuse;

namespace {

SemanticPointCloud cloud_of(std::vector<Eigen::Vector3d> points, std::vector<std::vector<double>> dists,
                            Rgb color = {10, 20, 30}) {
  SemanticPointCloud c;
  c.labels = static_cast<int>(dists.front().size());
  c.points = std::move(points);
  for (const auto& d : dists) c.distributions.insert(c.distributions.end(), d.begin(), d.end());
  c.colors.assign(c.points.size(), color);
  return c;
}

}  // namespace

TEST(VoxelIndex, FloorConvention) {
  EXPECT_EQ(voxel_index({0, 0, 0}, 0.01), (VoxelIndex{0, 0, 0}));
  EXPECT_EQ(voxel_index({0.015, -0.005, 0.02}, 0.01), (VoxelIndex{1, -1, 2}));
  EXPECT_EQ(voxel_index({0.01, 0, 0}, 0.01), (VoxelIndex{1, 0, 0}));
}

TEST(BayesUpdate, UniformLikelihoodKeepsPrior) {
  const auto p = bayes_update(std::vector<double>{0.2, 0.5, 0.3}, std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  EXPECT_NEAR(p[0], 0.2, 1e-15);
  EXPECT_NEAR(p[1], 0.5, 1e-15);
}

TEST(BayesUpdate, ProductRenormalized) {
  const auto p = bayes_update(std::vector<double>{0.6, 0.4}, std::vector<double>{0.6, 0.4});
  EXPECT_NEAR(p[0], 9.0 / 13.0, 1e-15);
  EXPECT_NEAR(p[1], 4.0 / 13.0, 1e-15);
  EXPECT_NEAR(p[0], 0.6923, 1e-4);
}

TEST(BayesUpdate, UniformPriorTakesLikelihood) {
  const auto p = bayes_update(std::vector<double>{0.5, 0.5}, std::vector<double>{0.9, 0.1});
  EXPECT_NEAR(p[0], 0.9, 1e-15);
}

TEST(BayesUpdate, ZeroLikelihoodIsFloored) {
  const auto p = bayes_update(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0});
  EXPECT_GT(p[1], 0.0);
  EXPECT_NEAR(p[1], 1e-8 / (1.0 + 1e-8), 1e-20);
}

TEST(BayesUpdate, SizeMismatch) {
  EXPECT_THROW(bayes_update(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0}), InvalidInput);
}

TEST(VoxelMap, EmptyCloudNoChange) {
  VoxelMap m(2, 0.01);
  SemanticPointCloud c;
  c.labels = 2;
  m.integrate(c);
  EXPECT_TRUE(m.empty());
}

TEST(VoxelMap, SinglePointTakesDistribution) {
  VoxelMap m(3, 0.01);
  m.integrate(cloud_of({{0.005, 0.005, 0.005}}, {{0.2, 0.3, 0.5}}));
  ASSERT_EQ(m.size(), 1u);
  const auto p = m.find(VoxelIndex{0, 0, 0})->posterior();
  EXPECT_NEAR(p[0], 0.2, 1e-15);
  EXPECT_NEAR(p[2], 0.5, 1e-15);
  EXPECT_EQ(m.find(VoxelIndex{0, 0, 0})->observations, 1u);
}

TEST(VoxelMap, TwiceIntegrated) {
  VoxelMap m(2, 0.01);
  const auto c = cloud_of({{0.001, 0.001, 0.001}}, {{0.6, 0.4}});
  m.integrate(c);
  m.integrate(c);
  const auto p = m.find(Eigen::Vector3d(0.001, 0.001, 0.001))->posterior();
  EXPECT_NEAR(p[0], 9.0 / 13.0, 1e-15);
}

TEST(VoxelMap, SameFramePointsFuseSequentially) {
  VoxelMap m(2, 0.1);
  m.integrate(cloud_of({{0.01, 0.01, 0.01}, {0.02, 0.02, 0.02}}, {{0.6, 0.4}, {0.6, 0.4}}));
  ASSERT_EQ(m.size(), 1u);
  EXPECT_NEAR(m.cells().begin()->second.posterior()[0], 9.0 / 13.0, 1e-15);
  EXPECT_EQ(m.cells().begin()->second.observations, 2u);
}

TEST(VoxelMap, LabelMismatch) {
  VoxelMap m(3, 0.01);
  EXPECT_THROW(m.integrate(cloud_of({{0, 0, 0}}, {{0.5, 0.5}})), InvalidInput);
}

TEST(VoxelMap, MeanColor) {
  VoxelMap m(2, 1.0);
  m.integrate(cloud_of({{0.1, 0.1, 0.1}}, {{0.5, 0.5}}, {10, 20, 30}));
  m.integrate(cloud_of({{0.2, 0.2, 0.2}}, {{0.5, 0.5}}, {30, 40, 50}));
  const Rgb c = m.find(VoxelIndex{0, 0, 0})->mean_color();
  EXPECT_EQ(c, (Rgb{20, 30, 40}));
}

TEST(VoxelMap, ConvergesMonotonically) {
  VoxelMap m(3, 0.01);
  const auto c = cloud_of({{0, 0, 0}}, {{0.4, 0.35, 0.25}});
  double prev = 0.0;
  for (int k = 0; k < 60; ++k) {
    m.integrate(c);
    const auto p = m.find(VoxelIndex{0, 0, 0})->posterior();
    const double top = *std::max_element(p.begin(), p.end());
    EXPECT_GT(top, prev);
    prev = top;
  }
  EXPECT_GT(prev, 0.99);
}

TEST(VoxelMap, OrderInvariantAndMergeable) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SemanticPointCloud> clouds;
  for (int f = 0; f < 12; ++f) {
    std::vector<Eigen::Vector3d> pts;
    std::vector<std::vector<double>> d;
    for (int i = 0; i < 40; ++i) {
      pts.emplace_back(0.05 * u(rng), 0.05 * u(rng), 0.05 * u(rng));
      const double a = u(rng), b = u(rng), c = u(rng);
      d.push_back({a / (a + b + c), b / (a + b + c), c / (a + b + c)});
    }
    clouds.push_back(cloud_of(pts, d));
  }
  VoxelMap ref(3, 0.02);
  for (const auto& c : clouds) ref.integrate(c);

  auto compare = [&](const VoxelMap& m) {
    ASSERT_EQ(m.size(), ref.size());
    for (const auto& [idx, cell] : ref.cells()) {
      const auto* o = m.find(idx);
      ASSERT_NE(o, nullptr);
      EXPECT_EQ(o->observations, cell.observations);
      const auto a = cell.posterior(), b = o->posterior();
      for (int l = 0; l < 3; ++l) EXPECT_NEAR(a[l], b[l], 1e-9);
    }
  };
  std::vector<int> order(clouds.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  VoxelMap shuffled(3, 0.02);
  for (int k : order) shuffled.integrate(clouds[k]);
  compare(shuffled);

  VoxelMap a(3, 0.02), b(3, 0.02);
  for (std::size_t k = 0; k < clouds.size(); ++k) (k < 5 ? a : b).integrate(clouds[k]);
  a.merge(b);
  compare(a);
  EXPECT_THROW(a.merge(VoxelMap(2, 0.02)), InvalidInput);
}

TEST(ExtractMap, Thresholds) {
  VoxelMap m(2, 0.5);
  EXPECT_TRUE(extract_map(m, 0, 0.0).empty());
  m.integrate(cloud_of({{0.1, 0.1, 0.1}}, {{0.9, 0.1}}));
  m.integrate(cloud_of({{1.1, 0.1, 0.1}}, {{0.52, 0.48}}));
  const auto all = extract_map(m, 1, 0.5);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].label, 0);
  EXPECT_NEAR(all[0].confidence, 0.9, 1e-15);
  EXPECT_NEAR((all[0].center - Eigen::Vector3d(0.25, 0.25, 0.25)).norm(), 0.0, 1e-15);
  const auto strict = extract_map(m, 1, 0.6);
  ASSERT_EQ(strict.size(), 1u);
  EXPECT_EQ(strict[0].index, (VoxelIndex{0, 0, 0}));
  EXPECT_TRUE(extract_map(m, 2, 0.0).empty());
}

TEST(ExtractMap, TiesGoToSmallestLabelAndOrderIsSorted) {
  VoxelMap m(2, 1.0);
  m.integrate(cloud_of({{5.5, 0, 0}, {-3.5, 0, 0}, {0.5, 0, 0}}, {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}));
  const auto pts = extract_map(m, 0, 0.0);
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_TRUE(std::is_sorted(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.index < b.index; }));
  for (const auto& p : pts) EXPECT_EQ(p.label, 0);
}

TEST(VoxelMap, RejectsBadResolution) {
  EXPECT_THROW(VoxelMap(2, 0.0), InvalidInput);
  EXPECT_THROW(VoxelMap(0, 0.01), InvalidInput);
}
