#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "matfuse/image.hpp"
#include "matfuse/pipeline.hpp"
#include "matfuse/projection.hpp"

namespace matfuse {

struct SceneBox {
  Eigen::Vector3d min;
  Eigen::Vector3d max;
  int label = 0;
};

/// Axis-aligned room with floating boxes, viewed by a camera orbiting the
/// vertical axis. World up is +Z. The floor and walls are slabs separated from
/// each other by `surface_gap`, so no voxel straddles two surfaces.
struct SyntheticSceneSpec {
  Eigen::Vector3d room_min{-2.0, -2.0, 0.0};
  Eigen::Vector3d room_max{2.0, 2.0, 1.0};
  int floor_label = 1;   // carpet
  int wall_label = 12;   // painted
  double surface_gap = 0.1;
  std::vector<SceneBox> boxes;

  int labels = 23;
  int image_width = 96;
  int image_height = 72;
  double focal = 80.0;
  double orbit_radius = 1.2;
  double orbit_height = 1.3;
  Eigen::Vector3d look_at{0.0, 0.0, 0.3};
  int frames = 20;

  double noise = 0.0;        ///< epsilon: probability of a wrong unary label
  double confidence = 0.6;   ///< probability placed on the unary label
  int color_jitter = 10;     ///< +/- per-channel RGB noise
  double voxel_resolution = 0.05;
  std::uint64_t seed = 0;

  /// A desk with objects of six materials in a carpeted, painted room.
  static SyntheticSceneSpec desk_scene();
  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  CameraIntrinsics intrinsics() const;
  Pose camera_pose(int frame) const;
  /// Floor, walls and boxes as one list of labelled slabs.
  std::vector<SceneBox> surfaces() const;
};

struct SyntheticFrame {
  RgbImage rgb;
  DepthImage depth;
  LabelImage truth;                ///< kIgnoreLabel where the ray hits nothing
  LabelDistributionImage unary;
  Pose pose;
};

/// Ray-casts one frame. Deterministic in (spec.seed, frame).
SyntheticFrame render_synthetic_frame(const SyntheticSceneSpec& spec, int frame);

/// Writes rgb/, depth/, truth/, unary/ and manifest.txt under `out_dir` and
/// returns the manifest path.
std::filesystem::path generate_synthetic(const SyntheticSceneSpec& spec,
                                         const std::filesystem::path& out_dir);

/// Corrupted unary distributions: each labelled pixel keeps its true label with
/// probability 1 - noise, otherwise takes a uniformly random wrong label; the
/// chosen label gets `confidence` and the rest share the remainder. Ignore
/// pixels get a uniform distribution.
LabelDistributionImage corrupt_unaries(const LabelImage& truth, int labels, double noise,
                                       double confidence, std::uint64_t seed);

/// 2D test image: random rectangles over a background, flat palette colours
/// with jitter, and corrupted unaries.
struct PiecewiseScene {
  RgbImage rgb;
  LabelImage truth;
  LabelDistributionImage unary;
};

struct PiecewiseSceneSpec {
  int height = 64;
  int width = 64;
  int labels = 5;
  int rectangles = 6;
  double noise = 0.2;
  double confidence = 0.6;
  int color_jitter = 10;
  std::uint64_t seed = 0;
};

PiecewiseScene make_piecewise_scene(const PiecewiseSceneSpec& spec);

/// Deterministic 64-bit seed mixing (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace matfuse
