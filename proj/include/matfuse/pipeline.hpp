#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "matfuse/crf.hpp"
#include "matfuse/fusion.hpp"
#include "matfuse/metrics.hpp"
#include "matfuse/projection.hpp"

namespace matfuse {

struct LabelInfo {
  std::string name;
  Rgb color{0, 0, 0};
};

/// The 23 material categories used by default, in label-id order.
const std::vector<LabelInfo>& material_labels();

/// Material table for L == 23, generated names and palette colours otherwise.
std::vector<LabelInfo> default_label_table(int labels);

/// Run configuration. Parsed from `key=value` lines (manifest header or a
/// --config file); see `set` for the recognised keys.
struct PipelineConfig {
  CameraIntrinsics intrinsics;
  int labels = 23;
  std::vector<LabelInfo> label_table = default_label_table(23);
  CrfParams crf = CrfParams::potts(23);
  double voxel_resolution = kDefaultVoxelResolution;
  FilterBackend backend = FilterBackend::kLattice;
  Precision precision = Precision::kDouble;
  std::uint32_t min_observations = 1;
  double min_confidence = 0.0;
  std::filesystem::path output_dir = "out";

  /// Applies one entry. Setting `labels` resets the label table and the
  /// compatibility matrix to defaults for the new count, so it should come
  /// before `label_names`, `label_colors` and `compatibility`.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  std::vector<std::string> label_names() const;
  /// Round-trippable `key=value` lines.
  std::string to_text() const;
};

/// Applies every `key=value` line of a config file (blank lines and `#` comments ignored).
void load_config_file(const std::filesystem::path& path, PipelineConfig& config);

struct FrameRecord {
  std::string frame_id;
  std::filesystem::path rgb_path;
  std::filesystem::path depth_path;
  std::filesystem::path unary_path;
  std::optional<std::filesystem::path> truth_path;
  Pose pose;
};

struct Manifest {
  PipelineConfig config;
  std::vector<FrameRecord> frames;
};

/// Manifest format: a header of `key=value` config lines, then one line per
/// frame: `frame_id rgb depth unary [truth] p00 p01 ... p33` (row-major
/// camera-to-world pose). Relative paths resolve against the manifest's
/// directory. `#` starts a comment.
Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                        bool check_files = true);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct FrameTimings {
  double load = 0.0;
  double crf = 0.0;
  double projection = 0.0;
};

struct FrameResult {
  LabelDistributionImage q;
  LabelImage labels;           ///< argmax of q
  SemanticPointCloud cloud;    ///< world frame
  FrameTimings timings;
};

/// load -> unaries -> features -> mean-field -> back-projection -> world cloud.
/// Errors are rethrown with the frame id prefixed.
FrameResult run_frame(const FrameRecord& record, const PipelineConfig& config);

struct RunOptions {
  bool write_outputs = true;
  bool frame_plys = false;
};

struct FrameSummary {
  std::string frame_id;
  std::size_t points = 0;
  std::optional<double> pixel_accuracy;  ///< single-frame CRF accuracy when truth exists
  FrameTimings timings;
};

struct PipelineResult {
  VoxelMap map;
  std::vector<FrameSummary> frames;
  std::vector<MapPoint> exported;
  std::optional<ConfusionMatrix> confusion;
  std::optional<SegmentationMetrics> metrics;
  double fusion_seconds = 0.0;
  double export_seconds = 0.0;
  double evaluation_seconds = 0.0;
};

/// Processes frames in manifest order, fuses them into one voxel map and, when
/// every frame has ground truth, scores the fused map. With `write_outputs`
/// the output directory receives map.ply, summary.txt and (with truth)
/// metrics.txt, metrics_per_class.csv and fused_labels/<frame>.pgm.
PipelineResult run_pipeline(const Manifest& manifest, const RunOptions& options = {});

}  // namespace matfuse
