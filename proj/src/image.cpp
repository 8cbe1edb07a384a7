#include "matfuse/image.hpp"

#include <algorithm>
#include <cmath>

namespace matfuse {

void LabelDistributionImage::validate(double tolerance) const {
  if (empty()) throw InvalidInput("label distribution image is empty");
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    double sum = 0.0;
    for (double p : pixel(i)) {
      if (!std::isfinite(p) || p < 0.0) {
        throw InvalidInput("invalid probability at pixel " + std::to_string(i));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance) {
      throw InvalidInput("probabilities at pixel " + std::to_string(i) + " sum to " +
                         std::to_string(sum));
    }
  }
}

void LabelImage::validate(int labels) const {
  for (std::size_t i = 0; i < data().size(); ++i) {
    const auto v = data()[i];
    if (v != kIgnoreLabel && v >= labels) {
      throw InvalidInput("label " + std::to_string(v) + " at pixel " + std::to_string(i) +
                         " is out of range for " + std::to_string(labels) + " labels");
    }
  }
}

bool LabelImage::has_ignore() const {
  return std::find(data().begin(), data().end(), kIgnoreLabel) != data().end();
}

LabelDistributionImage resize_bilinear(const LabelDistributionImage& image, int height, int width) {
  LabelDistributionImage out(height, width, image.labels());
  const int labels = image.labels();
  // Pixel-centre alignment.
  const double sy = static_cast<double>(image.height()) / height;
  const double sx = static_cast<double>(image.width()) / width;
  for (int r = 0; r < height; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(y));
    const int y1 = std::min(y0 + 1, image.height() - 1);
    const double fy = y - y0;
    for (int c = 0; c < width; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(x));
      const int x1 = std::min(x0 + 1, image.width() - 1);
      const double fx = x - x0;
      double sum = 0.0;
      for (int l = 0; l < labels; ++l) {
        const double v = (1 - fy) * ((1 - fx) * image(y0, x0, l) + fx * image(y0, x1, l)) +
                         fy * ((1 - fx) * image(y1, x0, l) + fx * image(y1, x1, l));
        out(r, c, l) = v;
        sum += v;
      }
      for (int l = 0; l < labels; ++l) out(r, c, l) /= sum;
    }
  }
  return out;
}

LabelImage resize_nearest(const LabelImage& image, int height, int width) {
  LabelImage out(height, width);
  for (int r = 0; r < height; ++r) {
    const int sr = std::min(image.height() - 1, static_cast<int>((r + 0.5) * image.height() / height));
    for (int c = 0; c < width; ++c) {
      const int sc = std::min(image.width() - 1, static_cast<int>((c + 0.5) * image.width() / width));
      out(r, c) = image(sr, sc);
    }
  }
  return out;
}

}  // namespace matfuse
