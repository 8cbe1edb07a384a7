#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "matfuse/fusion.hpp"
#include "matfuse/image.hpp"

namespace matfuse {

// Netpbm: binary P5 (8- or 16-bit, 16-bit samples big-endian) and P6 (8-bit).
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
LabelImage read_label_pgm(const std::filesystem::path& path);
void write_label_pgm(const std::filesystem::path& path, const LabelImage& image);
DepthImage read_depth_pgm(const std::filesystem::path& path);
void write_depth_pgm(const std::filesystem::path& path, const DepthImage& image);

/// Tolerance on per-pixel probability sums accepted by `load_unary`.
inline constexpr double kUnarySumTolerance = 1e-3;

/// UNRY layout: magic "UNRY", uint32 LE height, width, labels, then
/// height*width*labels float32 LE values, row-major with labels fastest.
/// Pixels must be non-negative and sum to 1 within 1e-3; they are rescaled to
/// sum exactly to 1.
LabelDistributionImage load_unary(const std::filesystem::path& path);
LabelDistributionImage parse_unary(std::span<const unsigned char> bytes);
void save_unary(const std::filesystem::path& path, const LabelDistributionImage& image);
std::vector<unsigned char> encode_unary(const LabelDistributionImage& image);

/// ASCII PLY with vertex properties x y z (float), red green blue (uchar),
/// label (uchar), confidence (float).
void write_ply(const std::filesystem::path& path, std::span<const MapPoint> points);

/// Writes a per-frame cloud using its hard labels.
void write_cloud_ply(const std::filesystem::path& path, const SemanticPointCloud& cloud);

struct PlyVertex {
  float x = 0, y = 0, z = 0;
  std::uint8_t red = 0, green = 0, blue = 0;
  std::uint8_t label = 0;
  float confidence = 0;
};

/// Strict reader for exactly the layout produced by `write_ply`.
std::vector<PlyVertex> read_ply(const std::filesystem::path& path);

}  // namespace matfuse
