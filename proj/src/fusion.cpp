#include "matfuse/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "matfuse/error.hpp"

namespace matfuse {
namespace {

double log_sum_exp(std::span<const double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

void renormalize(std::vector<double>& log_p) {
  const double z = log_sum_exp(log_p);
  for (double& x : log_p) x -= z;
}

void check_distribution(std::span<const double> p, const char* what) {
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0) throw InvalidInput(std::string(what) + " has an invalid entry");
  }
}

}  // namespace

VoxelIndex voxel_index(const Eigen::Vector3d& point, double resolution) {
  if (!point.allFinite()) throw InvalidInput("cannot voxelize a non-finite point");
  return {static_cast<std::int64_t>(std::floor(point.x() / resolution)),
          static_cast<std::int64_t>(std::floor(point.y() / resolution)),
          static_cast<std::int64_t>(std::floor(point.z() / resolution))};
}

std::vector<double> bayes_update(std::span<const double> prior, std::span<const double> likelihood) {
  if (prior.size() != likelihood.size() || prior.empty()) {
    throw InvalidInput("prior and likelihood must have the same non-zero length");
  }
  check_distribution(prior, "prior");
  check_distribution(likelihood, "likelihood");
  std::vector<double> log_post(prior.size());
  for (std::size_t l = 0; l < prior.size(); ++l) {
    // A zero prior stays zero: log(0) = -inf survives the renormalization.
    log_post[l] = std::log(prior[l]) + std::log(std::max(likelihood[l], kLikelihoodFloor));
  }
  renormalize(log_post);
  std::vector<double> out(prior.size());
  for (std::size_t l = 0; l < out.size(); ++l) out[l] = std::exp(log_post[l]);
  return out;
}

std::vector<double> VoxelCell::posterior() const {
  std::vector<double> p(log_posterior.size());
  double sum = 0.0;
  for (std::size_t l = 0; l < p.size(); ++l) sum += p[l] = std::exp(log_posterior[l]);
  for (double& x : p) x /= sum;
  return p;
}

Rgb VoxelCell::mean_color() const {
  if (observations == 0) return {0, 0, 0};
  Rgb out{};
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<std::uint8_t>(
        std::clamp(std::lround(color_sum[c] / observations), 0L, 255L));
  }
  return out;
}

VoxelMap::VoxelMap(int labels, double resolution) : labels_(labels), resolution_(resolution) {
  if (labels < 1) throw InvalidInput("voxel map needs at least one label");
  if (!(resolution > 0.0) || !std::isfinite(resolution)) {
    throw InvalidInput("voxel resolution must be positive");
  }
}

VoxelCell& VoxelMap::cell(const VoxelIndex& index) {
  auto [it, inserted] = cells_.try_emplace(index);
  if (inserted) it->second.log_posterior.assign(labels_, -std::log(static_cast<double>(labels_)));
  return it->second;
}

void VoxelMap::integrate(const SemanticPointCloud& cloud) {
  if (cloud.size() == 0) return;
  if (cloud.labels != labels_) {
    throw InvalidInput("cloud has " + std::to_string(cloud.labels) + " labels, map has " +
                       std::to_string(labels_));
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    VoxelCell& c = cell(voxel_index(cloud.points[i], resolution_));
    const auto lik = cloud.distribution(i);
    for (int l = 0; l < labels_; ++l) c.log_posterior[l] += std::log(std::max(lik[l], kLikelihoodFloor));
    renormalize(c.log_posterior);
    ++c.observations;
    for (int k = 0; k < 3; ++k) c.color_sum[k] += cloud.colors[i][k];
  }
}

void VoxelMap::merge(const VoxelMap& other) {
  if (other.labels_ != labels_ || other.resolution_ != resolution_) {
    throw InvalidInput("cannot merge voxel maps with different labels or resolution");
  }
  const double log_uniform = -std::log(static_cast<double>(labels_));
  for (const auto& [index, src] : other.cells_) {
    VoxelCell& dst = cell(index);
    // Both posteriors carry the uniform prior once; divide one copy out.
    for (int l = 0; l < labels_; ++l) dst.log_posterior[l] += src.log_posterior[l] - log_uniform;
    renormalize(dst.log_posterior);
    dst.observations += src.observations;
    for (int k = 0; k < 3; ++k) dst.color_sum[k] += src.color_sum[k];
  }
}

const VoxelCell* VoxelMap::find(const VoxelIndex& index) const {
  const auto it = cells_.find(index);
  return it == cells_.end() ? nullptr : &it->second;
}

Eigen::Vector3d VoxelMap::center(const VoxelIndex& index) const {
  return {(index.x + 0.5) * resolution_, (index.y + 0.5) * resolution_, (index.z + 0.5) * resolution_};
}

std::vector<VoxelIndex> VoxelMap::sorted_indices() const {
  std::vector<VoxelIndex> out;
  out.reserve(cells_.size());
  for (const auto& entry : cells_) out.push_back(entry.first);
  std::sort(out.begin(), out.end());
  return out;
}

VoxelMap integrate_cloud(VoxelMap map, const SemanticPointCloud& cloud) {
  map.integrate(cloud);
  return map;
}

std::vector<MapPoint> extract_map(const VoxelMap& map, std::uint32_t min_observations,
                                  double min_confidence) {
  if (!(min_confidence >= 0.0)) throw InvalidInput("confidence threshold must be >= 0");
  std::vector<MapPoint> out;
  for (const VoxelIndex& index : map.sorted_indices()) {
    const VoxelCell& c = *map.find(index);
    if (c.observations < min_observations) continue;
    const auto p = c.posterior();
    const auto it = std::max_element(p.begin(), p.end());
    if (*it < min_confidence) continue;
    out.push_back({index, map.center(index), static_cast<std::uint8_t>(it - p.begin()), *it,
                   c.mean_color(), c.observations});
  }
  return out;
}

}  // namespace matfuse
