#include <gtest/gtest.h>

#include <Eigen/LU>

#include "../support/test_support.hpp"
#include "matfuse/crf.hpp"
#include "matfuse/error.hpp"
#include "matfuse/io.hpp"
#include "matfuse/synthetic.hpp"

using namespace matfuse;

TEST(Synthetic, NoiselessUnaryArgmaxIsTruth) {
  auto spec = SyntheticSceneSpec::desk_scene();
  const auto f = render_synthetic_frame(spec, 3);
  const auto arg = map_labeling(f.unary);
  std::size_t labelled = 0;
  for (std::size_t i = 0; i < f.truth.pixel_count(); ++i) {
    if (f.truth.data()[i] == kIgnoreLabel) continue;
    ++labelled;
    EXPECT_EQ(arg.data()[i], f.truth.data()[i]);
  }
  EXPECT_GT(labelled, f.truth.pixel_count() / 2);
}

TEST(Synthetic, CorruptedFractionMatchesNoise) {
  LabelImage truth(200, 200);
  for (std::size_t i = 0; i < truth.pixel_count(); ++i) truth.storage()[i] = static_cast<std::uint8_t>(i % 7);
  const auto q = corrupt_unaries(truth, 7, 0.2, 0.6, 42);
  const auto arg = map_labeling(q);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.pixel_count(); ++i) wrong += arg.data()[i] != truth.data()[i];
  const double frac = static_cast<double>(wrong) / static_cast<double>(truth.pixel_count());
  EXPECT_NEAR(frac, 0.2, 0.01);
  EXPECT_NEAR(q.pixel(0)[arg.data()[0]], 0.6, 1e-15);
  EXPECT_NO_THROW(q.validate(1e-12));
}

TEST(Synthetic, SameSeedIdenticalDifferentSeedNot) {
  auto spec = SyntheticSceneSpec::desk_scene();
  spec.noise = 0.3;
  spec.seed = 9;
  const auto a = render_synthetic_frame(spec, 2), b = render_synthetic_frame(spec, 2);
  EXPECT_EQ(a.rgb, b.rgb);
  EXPECT_EQ(a.unary, b.unary);
  EXPECT_EQ(a.depth, b.depth);
  spec.seed = 10;
  EXPECT_NE(render_synthetic_frame(spec, 2).unary, a.unary);
}

TEST(Synthetic, PosesAreRigidAndLookAtTarget) {
  const auto spec = SyntheticSceneSpec::desk_scene();
  for (int k = 0; k < spec.frames; ++k) {
    const auto m = spec.camera_pose(k).matrix();
    const Eigen::Matrix3d rot = m.topLeftCorner(3, 3);
    const Eigen::Vector3d pos = m.topRightCorner(3, 1);
    EXPECT_NEAR(rot.determinant(), 1.0, 1e-12);
    EXPECT_NEAR(rot.col(2).dot((spec.look_at - pos).normalized()), 1.0, 1e-12);
  }
}

TEST(Synthetic, DepthMatchesRayDistance) {
  auto spec = SyntheticSceneSpec::desk_scene();
  const auto f = render_synthetic_frame(spec, 0);
  const auto grid = back_project(f.depth, spec.intrinsics());
  const auto world = f.pose.matrix();
  std::size_t inside = 0;
  for (std::size_t i = 0; i < f.depth.pixel_count(); ++i) {
    if (!grid.valid[i]) continue;
    const Eigen::Vector3d p = world.topLeftCorner(3, 3) * grid.points[i] + world.topRightCorner(3, 1);
    inside += (p.array() >= spec.room_min.array() - 0.06).all() && (p.array() <= spec.room_max.array() + 0.06).all();
  }
  EXPECT_EQ(inside, grid.valid_count());
}

TEST(Synthetic, GenerateWritesLoadableManifest) {
  auto spec = SyntheticSceneSpec::desk_scene();
  spec.frames = 2;
  const auto dir = testing_support::temp_dir("synthgen");
  const auto m = load_manifest(generate_synthetic(spec, dir));
  ASSERT_EQ(m.frames.size(), 2u);
  EXPECT_EQ(m.frames[1].frame_id, "frame_001");
  EXPECT_TRUE(m.frames[0].truth_path.has_value());
  EXPECT_EQ(m.config.voxel_resolution, 0.05);
  EXPECT_EQ(read_label_pgm(*m.frames[1].truth_path), render_synthetic_frame(spec, 1).truth);
}

TEST(Synthetic, ValidateRejectsBadSpecs) {
  auto spec = SyntheticSceneSpec::desk_scene();
  spec.noise = 1.5;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = SyntheticSceneSpec::desk_scene();
  spec.frames = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Piecewise, ShapesAndDeterminism) {
  PiecewiseSceneSpec spec;
  spec.seed = 4;
  const auto a = make_piecewise_scene(spec), b = make_piecewise_scene(spec);
  EXPECT_EQ(a.rgb, b.rgb);
  EXPECT_EQ(a.truth, b.truth);
  EXPECT_EQ(a.unary.labels(), 5);
  EXPECT_NO_THROW(a.truth.validate(5));
}

TEST(MixSeed, DistinctStreams) {
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
  EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
  EXPECT_EQ(mix_seed(7, 3), mix_seed(7, 3));
}
