#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "matfuse/error.hpp"

namespace matfuse {

/// Label value marking pixels excluded from losses and metrics.
inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Dense row-major image with interleaved channels (channel index fastest).
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int height, int width, int channels = 1, T fill = T{})
      : height_(height), width_(width), channels_(channels) {
    if (height <= 0 || width <= 0 || channels <= 0) {
      throw InvalidInput("image dimensions must be positive, got " + std::to_string(height) +
                         "x" + std::to_string(width) + "x" + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  T& operator()(int row, int col, int ch = 0) { return data_[offset(row, col, ch)]; }
  const T& operator()(int row, int col, int ch = 0) const { return data_[offset(row, col, ch)]; }

  std::span<T> pixel(std::size_t index) {
    return {data_.data() + index * channels_, static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(std::size_t index) const {
    return {data_.data() + index * channels_, static_cast<std::size_t>(channels_)};
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(int height, int width) const { return height_ == height && width_ == width; }
  template <typename U>
  bool same_shape(const Image<U>& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  friend bool operator==(const Image& a, const Image& b) = default;

 private:
  std::size_t offset(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

/// Per-pixel probability vectors over `labels()` classes.
class LabelDistributionImage : public Image<double> {
 public:
  LabelDistributionImage() = default;
  LabelDistributionImage(int height, int width, int labels, double fill = 0.0)
      : Image<double>(height, width, labels, fill) {}
  int labels() const { return channels(); }

  /// Throws InvalidInput unless every pixel is non-negative and sums to 1 within `tolerance`.
  void validate(double tolerance = 1e-6) const;
};

/// Per-pixel log-potentials U_i(l); higher means more likely.
class UnaryField : public Image<double> {
 public:
  UnaryField() = default;
  UnaryField(int height, int width, int labels, double fill = 0.0)
      : Image<double>(height, width, labels, fill) {}
  int labels() const { return channels(); }
};

/// Per-pixel label ids in [0, L) or kIgnoreLabel.
class LabelImage : public Image<std::uint8_t> {
 public:
  LabelImage() = default;
  LabelImage(int height, int width, std::uint8_t fill = 0) : Image<std::uint8_t>(height, width, 1, fill) {}

  /// Throws InvalidInput if any non-IGNORE label is >= labels.
  void validate(int labels) const;
  bool has_ignore() const;
};

class RgbImage : public Image<std::uint8_t> {
 public:
  RgbImage() = default;
  RgbImage(int height, int width, std::uint8_t fill = 0) : Image<std::uint8_t>(height, width, 3, fill) {}
};

/// Raw depth samples; 0 marks a missing measurement.
class DepthImage : public Image<std::uint16_t> {
 public:
  DepthImage() = default;
  DepthImage(int height, int width, std::uint16_t fill = 0) : Image<std::uint16_t>(height, width, 1, fill) {}
};

/// Bilinear resampling of a probability image; output pixels are renormalized.
LabelDistributionImage resize_bilinear(const LabelDistributionImage& image, int height, int width);

/// Nearest-neighbour resampling for label images.
LabelImage resize_nearest(const LabelImage& image, int height, int width);

}  // namespace matfuse
