#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "matfuse/image.hpp"

namespace matfuse {

struct CameraIntrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  double depth_scale = 0.001;  ///< meters per raw depth unit

  void validate() const;
};

/// Rigid camera-to-world transform (4x4 homogeneous, translation in meters).
class Pose {
 public:
  Pose() : matrix_(Eigen::Matrix4d::Identity()) {}
  /// Validates the rotation block and bottom row; throws InvalidInput otherwise.
  explicit Pose(const Eigen::Matrix4d& matrix);

  static Pose identity() { return Pose(); }
  static Pose from_row_major(std::span<const double> values);
  static Pose from_rotation_translation(const Eigen::Matrix3d& rotation,
                                        const Eigen::Vector3d& translation);

  const Eigen::Matrix4d& matrix() const { return matrix_; }
  Eigen::Matrix3d rotation() const { return matrix_.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return matrix_.topRightCorner<3, 1>(); }
  std::array<double, 16> row_major() const;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation() * p + translation(); }
  Pose inverse() const;
  Pose operator*(const Pose& other) const;

 private:
  Eigen::Matrix4d matrix_;
};

/// Organized back-projection result: one camera-frame point per pixel.
struct PointGrid {
  int height = 0;
  int width = 0;
  std::vector<Eigen::Vector3d> points;
  std::vector<std::uint8_t> valid;

  std::size_t valid_count() const;
};

using Rgb = std::array<std::uint8_t, 3>;

struct SemanticPointCloud {
  std::string frame_id;
  int labels = 0;
  std::vector<Eigen::Vector3d> points;
  std::vector<Rgb> colors;
  /// Row-major points x labels probabilities.
  std::vector<double> distributions;

  std::size_t size() const { return points.size(); }
  std::span<const double> distribution(std::size_t i) const {
    return {distributions.data() + i * labels, static_cast<std::size_t>(labels)};
  }
  /// Compact view: argmax label (smallest id on ties) and its probability.
  std::pair<std::uint8_t, double> hard_label(std::size_t i) const;

  /// Throws InvalidInput unless the parallel arrays agree and every
  /// distribution sums to 1 within 1e-6.
  void validate() const;
};

/// X = (u - cx) z / fx, Y = (v - cy) z / fy, Z = z with z = raw * depth_scale.
/// Raw value 0 marks an invalid pixel.
PointGrid back_project(const DepthImage& depth, const CameraIntrinsics& intrinsics);

/// Pixel coordinates (u, v) of a camera-frame point.
Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraIntrinsics& intrinsics);

/// One point per valid pixel in row-major order, carrying that pixel's
/// distribution and colour.
SemanticPointCloud make_semantic_cloud(const PointGrid& grid, const LabelDistributionImage& q,
                                       const RgbImage& rgb, std::string frame_id = {});

SemanticPointCloud transform_cloud(const SemanticPointCloud& cloud, const Pose& pose);

}  // namespace matfuse
