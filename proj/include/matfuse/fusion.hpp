#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "matfuse/projection.hpp"

namespace matfuse {

/// Likelihood floor so one confident wrong observation cannot zero a label.
inline constexpr double kLikelihoodFloor = 1e-8;
inline constexpr double kDefaultVoxelResolution = 0.01;

struct VoxelIndex {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  friend bool operator==(const VoxelIndex&, const VoxelIndex&) = default;
  friend auto operator<=>(const VoxelIndex&, const VoxelIndex&) = default;
};

struct VoxelIndexHash {
  std::size_t operator()(const VoxelIndex& v) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(v.x) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(v.y) * 19349663ULL;
    h ^= static_cast<std::uint64_t>(v.z) * 83492791ULL;
    return static_cast<std::size_t>(h ^ (h >> 31));
  }
};

/// floor(coordinate / resolution) per axis.
VoxelIndex voxel_index(const Eigen::Vector3d& point, double resolution);

/// Normalized element-wise product of prior and (floored) likelihood, in log space.
std::vector<double> bayes_update(std::span<const double> prior, std::span<const double> likelihood);

struct VoxelCell {
  std::vector<double> log_posterior;  ///< normalized: logsumexp == 0
  std::uint32_t observations = 0;
  std::array<double, 3> color_sum{0.0, 0.0, 0.0};

  std::vector<double> posterior() const;
  Rgb mean_color() const;
};

/// Sparse voxel grid of fused label posteriors. One writer at a time; partial
/// maps built from disjoint frame sets can be combined with `merge`.
class VoxelMap {
 public:
  VoxelMap(int labels, double resolution = kDefaultVoxelResolution);

  int labels() const { return labels_; }
  double resolution() const { return resolution_; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }

  /// Fuses every point of a world-frame cloud into its voxel, in point order.
  /// New voxels start from the uniform prior.
  void integrate(const SemanticPointCloud& cloud);

  /// Fuses the accumulated evidence of another map built over disjoint frames.
  void merge(const VoxelMap& other);

  const VoxelCell* find(const VoxelIndex& index) const;
  const VoxelCell* find(const Eigen::Vector3d& point) const { return find(voxel_index(point, resolution_)); }

  Eigen::Vector3d center(const VoxelIndex& index) const;

  /// Voxel indices in ascending order.
  std::vector<VoxelIndex> sorted_indices() const;

  const std::unordered_map<VoxelIndex, VoxelCell, VoxelIndexHash>& cells() const { return cells_; }

 private:
  VoxelCell& cell(const VoxelIndex& index);

  int labels_;
  double resolution_;
  std::unordered_map<VoxelIndex, VoxelCell, VoxelIndexHash> cells_;
};

/// Convenience wrapper matching the functional form: returns the updated map.
VoxelMap integrate_cloud(VoxelMap map, const SemanticPointCloud& cloud);

struct MapPoint {
  VoxelIndex index;
  Eigen::Vector3d center;
  std::uint8_t label = 0;
  double confidence = 0.0;
  Rgb color{0, 0, 0};
  std::uint32_t observations = 0;
};

/// Voxels with at least `min_observations` observations and max posterior
/// >= `min_confidence`, in ascending voxel-index order.
std::vector<MapPoint> extract_map(const VoxelMap& map, std::uint32_t min_observations,
                                  double min_confidence);

}  // namespace matfuse
