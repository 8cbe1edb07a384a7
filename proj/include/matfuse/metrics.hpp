#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "matfuse/fusion.hpp"
#include "matfuse/image.hpp"
#include "matfuse/projection.hpp"

namespace matfuse {

/// L x L counts n(truth, predicted). Predictions equal to kIgnoreLabel are
/// tallied as missing (no prediction available) outside the matrix.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int labels);

  int labels() const { return labels_; }
  std::uint64_t count(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth) * labels_ + predicted];
  }
  void add(int truth, int predicted, std::uint64_t n = 1);
  void add_missing(std::uint64_t n = 1) { missing_ += n; }

  /// Counts every pixel whose truth is not IGNORE.
  void accumulate(const LabelImage& predicted, const LabelImage& truth);
  void merge(const ConfusionMatrix& other);

  /// t_i: number of pixels with truth i.
  std::uint64_t truth_total(int label) const;
  /// Number of pixels predicted as `label`.
  std::uint64_t predicted_total(int label) const;
  std::uint64_t total() const;
  std::uint64_t missing() const { return missing_; }
  /// Fraction of evaluated pixels that received a prediction (0 if none evaluated).
  double coverage() const;

 private:
  int labels_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t missing_ = 0;
};

struct ClassScores {
  std::uint64_t truth_count = 0;
  std::uint64_t predicted_count = 0;
  std::uint64_t true_positives = 0;
  double accuracy = 0.0;  ///< n_ii / t_i (0 when the class is absent)
  double iu = 0.0;        ///< n_ii / (t_i + sum_j n_ji - n_ii)
  bool present = false;   ///< t_i > 0
};

struct SegmentationMetrics {
  double pixel_accuracy = 0.0;
  double mean_accuracy = 0.0;
  double mean_iu = 0.0;
  double frequency_weighted_iu = 0.0;
  int present_classes = 0;
  std::vector<ClassScores> per_class;
};

/// Classes absent from the ground truth are left out of every average.
/// Throws InvalidInput for an empty matrix.
SegmentationMetrics compute_metrics(const ConfusionMatrix& cm);

/// One posed ground-truth view used to score a fused map.
struct EvaluationFrame {
  LabelImage truth;
  DepthImage depth;
  CameraIntrinsics intrinsics;
  Pose pose;
};

/// Per-pixel prediction rendered by looking up each valid-depth pixel's world
/// voxel; invalid depth and unmapped voxels come out as kIgnoreLabel.
LabelImage render_map_labels(const VoxelMap& map, const DepthImage& depth,
                             const CameraIntrinsics& intrinsics, const Pose& pose);

/// Scores the fused map against posed ground truth. Pixels with valid depth
/// and non-IGNORE truth are evaluated; unmapped voxels count as missing.
ConfusionMatrix evaluate_fused_map(const VoxelMap& map, std::span<const EvaluationFrame> frames);

/// Flat `key=value` report.
void write_metrics_report(const std::filesystem::path& path, const SegmentationMetrics& metrics,
                          const ConfusionMatrix& cm);

/// `label,name,truth_count,predicted_count,true_positives,accuracy,iu` rows.
void write_class_csv(const std::filesystem::path& path, const SegmentationMetrics& metrics,
                     std::span<const std::string> names);

}  // namespace matfuse
