#include "matfuse/projection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/LU>

#include "matfuse/error.hpp"

namespace matfuse {
namespace {

constexpr double kPoseTolerance = 1e-5;

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInput("focal lengths must be positive");
  if (!(depth_scale > 0.0)) throw InvalidInput("depth scale must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw InvalidInput("principal point must be finite");
}

Pose::Pose(const Eigen::Matrix4d& matrix) : matrix_(matrix) {
  if (!matrix.allFinite()) throw InvalidInput("pose contains non-finite values");
  const Eigen::Matrix3d r = matrix.topLeftCorner<3, 3>();
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > kPoseTolerance) {
    std::ostringstream msg;
    msg << "pose rotation is not orthonormal (deviation " << ortho << ")";
    throw InvalidInput(msg.str());
  }
  if (std::abs(r.determinant() - 1.0) > kPoseTolerance) {
    throw InvalidInput("pose rotation determinant is not +1");
  }
  const Eigen::RowVector4d bottom = matrix.row(3);
  if ((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 0.0) {
    throw InvalidInput("pose bottom row must be (0, 0, 0, 1)");
  }
}

Pose Pose::from_row_major(std::span<const double> values) {
  if (values.size() != 16) {
    throw InvalidInput("pose needs 16 values, got " + std::to_string(values.size()));
  }
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = values[r * 4 + c];
  return Pose(m);
}

Pose Pose::from_rotation_translation(const Eigen::Matrix3d& rotation,
                                     const Eigen::Vector3d& translation) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return Pose(m);
}

std::array<double, 16> Pose::row_major() const {
  std::array<double, 16> out{};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out[r * 4 + c] = matrix_(r, c);
  return out;
}

Pose Pose::inverse() const {
  const Eigen::Matrix3d rt = rotation().transpose();
  return from_rotation_translation(rt, -rt * translation());
}

Pose Pose::operator*(const Pose& other) const {
  return from_rotation_translation(rotation() * other.rotation(),
                                   rotation() * other.translation() + translation());
}

std::size_t PointGrid::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

std::pair<std::uint8_t, double> SemanticPointCloud::hard_label(std::size_t i) const {
  const auto d = distribution(i);
  const auto it = std::max_element(d.begin(), d.end());
  return {static_cast<std::uint8_t>(it - d.begin()), *it};
}

void SemanticPointCloud::validate() const {
  if (colors.size() != points.size() ||
      distributions.size() != points.size() * static_cast<std::size_t>(labels)) {
    throw InvalidInput("semantic cloud arrays have inconsistent lengths");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    double sum = 0.0;
    for (double p : distribution(i)) {
      if (!(p >= 0.0)) throw InvalidInput("negative probability in semantic cloud");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw InvalidInput("semantic cloud distribution " + std::to_string(i) + " sums to " +
                         std::to_string(sum));
    }
  }
}

PointGrid back_project(const DepthImage& depth, const CameraIntrinsics& intrinsics) {
  intrinsics.validate();
  if (depth.empty()) throw InvalidInput("depth image is empty");
  PointGrid grid;
  grid.height = depth.height();
  grid.width = depth.width();
  grid.points.assign(depth.pixel_count(), Eigen::Vector3d::Zero());
  grid.valid.assign(depth.pixel_count(), 0);
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      const std::uint16_t raw = depth(v, u);
      if (raw == 0) continue;
      const double z = raw * intrinsics.depth_scale;
      const std::size_t i = static_cast<std::size_t>(v) * depth.width() + u;
      grid.points[i] = {(u - intrinsics.cx) * z / intrinsics.fx, (v - intrinsics.cy) * z / intrinsics.fy, z};
      grid.valid[i] = 1;
    }
  }
  return grid;
}

Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraIntrinsics& intrinsics) {
  return {intrinsics.fx * point.x() / point.z() + intrinsics.cx,
          intrinsics.fy * point.y() / point.z() + intrinsics.cy};
}

SemanticPointCloud make_semantic_cloud(const PointGrid& grid, const LabelDistributionImage& q,
                                       const RgbImage& rgb, std::string frame_id) {
  if (!q.same_shape(grid.height, grid.width) || !rgb.same_shape(grid.height, grid.width)) {
    throw InvalidInput("depth, label distribution and colour images must share dimensions");
  }
  SemanticPointCloud cloud;
  cloud.frame_id = std::move(frame_id);
  cloud.labels = q.labels();
  const std::size_t n = grid.valid_count();
  cloud.points.reserve(n);
  cloud.colors.reserve(n);
  cloud.distributions.reserve(n * q.labels());
  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    if (!grid.valid[i]) continue;
    cloud.points.push_back(grid.points[i]);
    const auto c = rgb.pixel(i);
    cloud.colors.push_back({c[0], c[1], c[2]});
    const auto p = q.pixel(i);
    cloud.distributions.insert(cloud.distributions.end(), p.begin(), p.end());
  }
  return cloud;
}

SemanticPointCloud transform_cloud(const SemanticPointCloud& cloud, const Pose& pose) {
  SemanticPointCloud out = cloud;
  const Eigen::Matrix3d r = pose.rotation();
  const Eigen::Vector3d t = pose.translation();
  for (auto& p : out.points) p = r * p + t;
  return out;
}

}  // namespace matfuse
