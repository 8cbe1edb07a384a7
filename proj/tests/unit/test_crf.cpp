#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "../support/test_support.hpp"
#include "matfuse/crf.hpp"
#include "matfuse/error.hpp"

using namespace matfuse;
namespace ts = testing_support;

namespace {

LabelDistributionImage probs_1x1(std::vector<double> p) {
  LabelDistributionImage img(1, 1, static_cast<int>(p.size()));
  std::copy(p.begin(), p.end(), img.data().begin());
  return img;
}

FeatureField flat_features(int height, int width) {
  FeatureField f;
  f.height = height;
  f.width = width;
  f.bilateral.assign(static_cast<std::size_t>(height) * width * kBilateralDim, 0.0);
  f.spatial.assign(static_cast<std::size_t>(height) * width * kSpatialDim, 0.0);
  return f;
}

}  // namespace

TEST(Unary, UniformRoundTrip) {
  const auto u = unary_from_probabilities(probs_1x1({0.5, 0.5}));
  EXPECT_DOUBLE_EQ(u.pixel(0)[0], std::log(0.5));
  EXPECT_DOUBLE_EQ(u.pixel(0)[1], std::log(0.5));
  const auto q = softmax(u);
  EXPECT_NEAR(q.pixel(0)[0], 0.5, 1e-15);
}

TEST(Unary, SoftmaxRecoversProbabilities) {
  const auto q = softmax(unary_from_probabilities(probs_1x1({0.8, 0.2})));
  EXPECT_NEAR(q.pixel(0)[0], 0.8, 1e-9);
  EXPECT_NEAR(q.pixel(0)[1], 0.2, 1e-9);
}

TEST(Unary, ZeroProbabilityIsClamped) {
  const auto u = unary_from_probabilities(probs_1x1({1.0, 0.0, 0.0}));
  EXPECT_DOUBLE_EQ(u.pixel(0)[1], std::log(1e-8));
  const auto q = softmax(u);
  const double z = 1.0 + 2e-8;
  EXPECT_NEAR(q.pixel(0)[0], 1.0 / z, 1e-15);
  EXPECT_NEAR(q.pixel(0)[1], 1e-8 / z, 1e-20);
}

TEST(Unary, EmptyInputRejected) {
  EXPECT_THROW(unary_from_probabilities(LabelDistributionImage{}), InvalidInput);
}

TEST(Features, OriginIsZero) {
  RgbImage rgb(2, 2, 0);
  CrfParams p = CrfParams::potts(2);
  p.theta_alpha = p.theta_beta = 1.0;
  const auto f = build_features(rgb, p);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(f.bilateral[k], 0.0);
}

TEST(Features, SpatialDivision) {
  RgbImage rgb(30, 30, 0);
  CrfParams p = CrfParams::potts(2);
  p.theta_gamma = 5.0;
  const auto f = build_features(rgb, p);
  // Pixel (x=10, y=20) lives at row 20, column 10.
  const std::size_t i = 20 * 30 + 10;
  EXPECT_DOUBLE_EQ(f.spatial[2 * i], 2.0);
  EXPECT_DOUBLE_EQ(f.spatial[2 * i + 1], 4.0);
}

TEST(Features, BilateralScaling) {
  RgbImage rgb(6, 6, 0);
  rgb(4, 3, 0) = 30;
  rgb(4, 3, 1) = 60;
  rgb(4, 3, 2) = 90;
  const auto f = build_features(rgb, CrfParams::potts(2));
  const std::size_t i = 4 * 6 + 3;
  const double expected[5] = {3.0 / 61, 4.0 / 61, 30.0 / 11, 60.0 / 11, 90.0 / 11};
  for (int k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(f.bilateral[5 * i + k], expected[k]);
}

TEST(MeanFieldStep, SinglePixelReturnsSoftmax) {
  const auto u = unary_from_probabilities(probs_1x1({0.7, 0.2, 0.1}));
  const auto q0 = probs_1x1({0.1, 0.1, 0.8});
  for (auto backend : {FilterBackend::kExact, FilterBackend::kLattice}) {
    const auto q = mean_field_step(q0, u, flat_features(1, 1), CrfParams::potts(3), {backend});
    EXPECT_NEAR(q.pixel(0)[0], 0.7, 1e-12);
    EXPECT_NEAR(q.pixel(0)[2], 0.1, 1e-12);
  }
}

TEST(MeanFieldStep, ZeroWeightsIgnoreQ) {
  auto inst = ts::random_instance(3, 4, 5, 3, 1);
  auto params = ts::to_params(inst);
  params.kernel_weights = {0.0, 0.0};
  const auto u = ts::to_unary(inst);
  const auto f = build_features(ts::to_rgb(inst), params);
  LabelDistributionImage q0(4, 5, 3, 0.0);
  for (std::size_t i = 0; i < q0.pixel_count(); ++i) q0.pixel(i)[i % 3] = 1.0;
  const auto q = mean_field_step(q0, u, f, params, {FilterBackend::kExact});
  const auto expected = softmax(u);
  for (std::size_t k = 0; k < q.data().size(); ++k) EXPECT_NEAR(q.data()[k], expected.data()[k], 1e-15);
}

TEST(MeanFieldStep, TwoPixelHandEvaluation) {
  // Identical features: k = 1 between the pair, each the other's only neighbour.
  LabelDistributionImage probs(1, 2, 2);
  probs.pixel(0)[0] = 0.9;
  probs.pixel(0)[1] = 0.1;
  probs.pixel(1)[0] = 0.4;
  probs.pixel(1)[1] = 0.6;
  const auto u = unary_from_probabilities(probs);
  CrfParams p = CrfParams::potts(2);
  p.kernel_weights = {1.0, 0.0};
  const auto q = mean_field_step(softmax(u), u, flat_features(1, 2), p, {FilterBackend::kExact});
  // Pixel 0 sees message (0.4, 0.6): penalties (0.6, 0.4).
  const double a0 = 0.9 * std::exp(-0.6), b0 = 0.1 * std::exp(-0.4);
  const double a1 = 0.4 * std::exp(-0.1), b1 = 0.6 * std::exp(-0.9);
  EXPECT_NEAR(q.pixel(0)[0], a0 / (a0 + b0), 1e-14);
  EXPECT_NEAR(q.pixel(1)[0], a1 / (a1 + b1), 1e-14);
}

TEST(MeanFieldStep, DimensionMismatch) {
  const auto u = UnaryField(2, 2, 2);
  EXPECT_THROW(mean_field_step(LabelDistributionImage(2, 3, 2, 0.5), u, flat_features(2, 2),
                               CrfParams::potts(2)),
               InvalidInput);
  EXPECT_THROW(mean_field_step(LabelDistributionImage(2, 2, 2, 0.5), u, flat_features(3, 2),
                               CrfParams::potts(2)),
               InvalidInput);
}

TEST(MeanFieldStep, NonFiniteReportsLocation) {
  UnaryField u(2, 2, 2, 0.0);
  u(1, 0, 1) = std::numeric_limits<double>::infinity();
  LabelDistributionImage q0(2, 2, 2, 0.5);
  try {
    mean_field_step(q0, u, flat_features(2, 2), CrfParams::potts(2), {FilterBackend::kExact});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(MeanFieldInfer, SingleIterationMatchesStep) {
  auto inst = ts::random_instance(7, 5, 5, 3, 1);
  const auto params = ts::to_params(inst);
  const auto u = ts::to_unary(inst);
  const auto f = build_features(ts::to_rgb(inst), params);
  const auto r = mean_field_infer(u, f, params, {FilterBackend::kExact});
  const auto s = mean_field_step(softmax(u), u, f, params, {FilterBackend::kExact});
  EXPECT_EQ(r.q, s);
  ASSERT_EQ(r.trace.q.size(), 2u);
}

TEST(MeanFieldInfer, UniformStaysUniform) {
  UnaryField u(5, 5, 4, std::log(0.25));
  const auto f = build_features(RgbImage(5, 5, 77), CrfParams::potts(4));
  for (auto backend : {FilterBackend::kExact, FilterBackend::kLattice}) {
    const auto q = mean_field_infer(u, f, CrfParams::potts(4), {backend}).q;
    for (double v : q.data()) EXPECT_NEAR(v, 0.25, 1e-12);
  }
}

TEST(MeanFieldInfer, MatchesReferenceOn6x6) {
  const auto inst = ts::random_instance(11, 6, 6, 3, 5);
  const auto params = ts::to_params(inst);
  const auto q = mean_field_infer(ts::to_unary(inst), build_features(ts::to_rgb(inst), params), params,
                                  {FilterBackend::kExact})
                     .q;
  EXPECT_LE(ts::max_abs_diff(q, oracle::reference_mean_field(inst)), 1e-12);
}

TEST(MeanFieldInfer, ZeroIterationsRejected) {
  CrfParams p = CrfParams::potts(2);
  p.iterations = 0;
  EXPECT_THROW(mean_field_infer(UnaryField(2, 2, 2), flat_features(2, 2), p), ConfigError);
}

TEST(MeanFieldInfer, OutputIsNormalizedEveryIteration) {
  const auto inst = ts::random_instance(5, 8, 8, 4, 5);
  const auto params = ts::to_params(inst);
  for (auto backend : {FilterBackend::kExact, FilterBackend::kLattice}) {
    const auto r = mean_field_infer(ts::to_unary(inst), build_features(ts::to_rgb(inst), params), params, {backend});
    for (const auto& q : r.trace.q) EXPECT_NO_THROW(q.validate(1e-6));
  }
}

TEST(Energy, SinglePixel) {
  const auto u = unary_from_probabilities(probs_1x1({0.8, 0.2}));
  const double e = crf_energy(LabelImage(1, 1, 0), u, flat_features(1, 1), CrfParams::potts(2));
  EXPECT_NEAR(e, -std::log(0.8), 1e-15);
  EXPECT_NEAR(e, 0.2231, 1e-4);
}

TEST(Energy, ZeroWeightsIsUnarySum) {
  auto inst = ts::random_instance(2, 3, 3, 3, 1);
  auto params = ts::to_params(inst);
  params.kernel_weights = {0.0, 0.0};
  const auto u = ts::to_unary(inst);
  LabelImage x(3, 3);
  double expected = 0.0;
  for (int i = 0; i < 9; ++i) {
    x.data()[i] = static_cast<std::uint8_t>(i % 3);
    expected -= inst.unary[i][i % 3];
  }
  EXPECT_NEAR(crf_energy(x, u, build_features(ts::to_rgb(inst), params), params), expected, 1e-12);
}

TEST(Energy, IdenticalPairDifferenceIsKernel) {
  UnaryField u(1, 2, 2, std::log(0.5));
  CrfParams p = CrfParams::potts(2);
  p.kernel_weights = {1.0, 0.0};
  const auto f = flat_features(1, 2);
  LabelImage same(1, 2, 0), diff(1, 2, 0);
  diff.data()[1] = 1;
  EXPECT_NEAR(crf_energy(diff, u, f, p) - crf_energy(same, u, f, p), 1.0, 1e-15);
}

TEST(Energy, MatchesReference) {
  const auto inst = ts::random_instance(9, 3, 4, 3, 1);
  const auto params = ts::to_params(inst);
  LabelImage x(3, 4);
  std::vector<int> xs(12);
  for (int i = 0; i < 12; ++i) x.data()[i] = static_cast<std::uint8_t>(xs[i] = (i * 7) % 3);
  EXPECT_NEAR(crf_energy(x, ts::to_unary(inst), build_features(ts::to_rgb(inst), params), params),
              oracle::reference_energy(inst, xs), 1e-10);
}

TEST(Energy, IgnoreRejected) {
  EXPECT_THROW(crf_energy(LabelImage(1, 1, kIgnoreLabel), UnaryField(1, 1, 2), flat_features(1, 1),
                          CrfParams::potts(2)),
               InvalidInput);
}

TEST(BruteForce, SinglePixelUnaryArgmax) {
  const auto u = unary_from_probabilities(probs_1x1({0.8, 0.2}));
  EXPECT_EQ(brute_force_map(u, flat_features(1, 1), CrfParams::potts(2)).data()[0], 0);
}

TEST(BruteForce, ZeroWeightsIsPerPixelArgmax) {
  auto inst = ts::random_instance(4, 2, 3, 3, 1);
  auto params = ts::to_params(inst);
  params.kernel_weights = {0.0, 0.0};
  const auto u = ts::to_unary(inst);
  EXPECT_EQ(brute_force_map(u, build_features(ts::to_rgb(inst), params), params), map_labeling(softmax(u)));
}

TEST(BruteForce, StrongCouplingFollowsMajority) {
  UnaryField u(2, 2, 2);
  for (int i = 0; i < 4; ++i) {
    const double p1 = i < 3 ? 0.7 : 0.3;
    u.pixel(i)[0] = std::log(1 - p1);
    u.pixel(i)[1] = std::log(p1);
  }
  CrfParams p = CrfParams::potts(2);
  p.kernel_weights = {10.0, 0.0};
  const auto x = brute_force_map(u, flat_features(2, 2), p);
  for (auto v : x.data()) EXPECT_EQ(v, 1);
}

TEST(BruteForce, TooLargeRejected) {
  EXPECT_THROW(brute_force_map(UnaryField(3, 7, 2), flat_features(3, 7), CrfParams::potts(2)), SizeError);
}

TEST(MapLabeling, ArgmaxAndTies) {
  EXPECT_EQ(map_labeling(probs_1x1({0.8, 0.2})).data()[0], 0);
  EXPECT_EQ(map_labeling(probs_1x1({0.5, 0.5})).data()[0], 0);
  EXPECT_EQ(map_labeling(probs_1x1({0.1, 0.2, 0.7})).data()[0], 2);
}

TEST(Backward, NoPairwisePathGivesSoftmaxJvp) {
  auto inst = ts::random_instance(21, 3, 3, 3, 1);
  auto params = ts::to_params(inst);
  params.kernel_weights = {0.0, 0.0};
  const auto r = mean_field_infer(ts::to_unary(inst), build_features(ts::to_rgb(inst), params), params,
                                  {FilterBackend::kExact});
  LabelDistributionImage g(3, 3, 3);
  std::mt19937_64 rng(1);
  for (auto& v : g.data()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  const auto grads = mean_field_backward(r.trace, g);
  for (std::size_t i = 0; i < 9; ++i) {
    const auto q = r.q.pixel(i);
    double dot = 0.0;
    for (int l = 0; l < 3; ++l) dot += g.pixel(i)[l] * q[l];
    for (int l = 0; l < 3; ++l) EXPECT_NEAR(grads.d_unary.pixel(i)[l], q[l] * (g.pixel(i)[l] - dot), 1e-14);
  }
}

TEST(Backward, ZeroLossGradient) {
  const auto inst = ts::random_instance(22, 4, 4, 3, 3);
  const auto params = ts::to_params(inst);
  const auto r = mean_field_infer(ts::to_unary(inst), build_features(ts::to_rgb(inst), params), params,
                                  {FilterBackend::kExact});
  const auto grads = mean_field_backward(r.trace, LabelDistributionImage(4, 4, 3, 0.0));
  for (double v : grads.d_unary.data()) EXPECT_EQ(v, 0.0);
  for (double v : grads.d_weights) EXPECT_EQ(v, 0.0);
  for (double v : grads.d_compatibility) EXPECT_EQ(v, 0.0);
}

TEST(Backward, ShapeMismatch) {
  const auto inst = ts::random_instance(23, 3, 3, 2, 2);
  const auto params = ts::to_params(inst);
  const auto r = mean_field_infer(ts::to_unary(inst), build_features(ts::to_rgb(inst), params), params);
  EXPECT_THROW(mean_field_backward(r.trace, LabelDistributionImage(3, 3, 3, 0.0)), InvalidInput);
}

TEST(Params, Validation) {
  CrfParams p = CrfParams::potts(3);
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.mu(0, 0), 0.0);
  EXPECT_EQ(p.mu(0, 2), 1.0);
  p.kernel_weights[0] = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = CrfParams::potts(3);
  p.theta_beta = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = CrfParams::potts(3);
  p.compatibility.pop_back();
  EXPECT_THROW(p.validate(), ConfigError);
}
