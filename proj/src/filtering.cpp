#include "matfuse/filtering.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "matfuse/error.hpp"
#include "matfuse/permutohedral.hpp"

namespace matfuse {
namespace {

// Below this fraction of the full (self-inclusive) lattice mass a point is
// treated as having no neighbours; the subtraction is pure round-off there.
constexpr double kLatticeIsolationRatio = 1e-10;

inline double squared_distance(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

}  // namespace

std::string_view to_string(FilterBackend backend) {
  return backend == FilterBackend::kExact ? "exact" : "lattice";
}

FilterBackend parse_backend(std::string_view name) {
  if (name == "exact") return FilterBackend::kExact;
  if (name == "lattice") return FilterBackend::kLattice;
  throw ConfigError("unknown filter backend '" + std::string(name) + "' (expected exact|lattice)");
}

double gaussian_kernel(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput("feature dimension mismatch");
  return std::exp(-0.5 * squared_distance(a.data(), b.data(), static_cast<int>(a.size())));
}

FilterPlan::FilterPlan(std::span<const double> features, int dim, FilterBackend backend)
    : dim_(dim), backend_(backend) {
  if (dim < 1) throw InvalidInput("feature dimension must be >= 1");
  if (features.empty() || features.size() % static_cast<std::size_t>(dim) != 0) {
    throw InvalidInput("features must hold N >= 1 rows of " + std::to_string(dim) + " values");
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!std::isfinite(features[i])) {
      throw InvalidInput("non-finite feature at point " + std::to_string(i / dim) + ", component " +
                         std::to_string(i % dim));
    }
  }
  size_ = static_cast<int>(features.size() / dim);
  features_.assign(features.begin(), features.end());

  const std::size_t n = static_cast<std::size_t>(size_);
  normalizers_.assign(n, 1.0);
  inverse_normalizers_.assign(n, 0.0);
  std::vector<double> mass(n, 0.0);

  if (backend_ == FilterBackend::kExact) {
    self_weights_.assign(n, 1.0);
    const std::vector<double> ones(n, 1.0);
    off_diagonal(ones, 1, mass, false, Precision::kDouble);
    for (std::size_t i = 0; i < n; ++i) {
      if (mass[i] > 0.0) {
        normalizers_[i] = mass[i];
        inverse_normalizers_[i] = 1.0 / mass[i];
      }
    }
    return;
  }

  lattice_ = std::make_unique<PermutohedralLattice>(features_, dim_);
  self_weights_ = lattice_->diagonal();
  const std::vector<double> ones(n, 1.0);
  lattice_->filter<double>(ones, 1, mass, false);
  for (std::size_t i = 0; i < n; ++i) {
    const double off = mass[i] - self_weights_[i];
    if (off > kLatticeIsolationRatio * mass[i]) {
      normalizers_[i] = off;
      inverse_normalizers_[i] = 1.0 / off;
    }
  }
}

FilterPlan::~FilterPlan() = default;
FilterPlan::FilterPlan(FilterPlan&&) noexcept = default;
FilterPlan& FilterPlan::operator=(FilterPlan&&) noexcept = default;

std::size_t FilterPlan::lattice_vertices() const {
  return lattice_ ? lattice_->vertex_count() : 0;
}

void FilterPlan::check_shape(std::span<const double> values, int channels,
                             std::span<double> out) const {
  if (channels < 1) throw InvalidInput("channel count must be >= 1");
  const std::size_t expected = static_cast<std::size_t>(size_) * channels;
  if (values.size() != expected || out.size() != expected) {
    throw InvalidInput("filter values have " + std::to_string(values.size()) + " entries, expected " +
                       std::to_string(expected) + " (" + std::to_string(size_) + " points x " +
                       std::to_string(channels) + " channels)");
  }
}

void FilterPlan::full_sum(std::span<const double> values, int channels, std::span<double> out,
                          bool transpose, Precision precision) const {
  if (precision == Precision::kSingle) {
    lattice_->filter<float>(values, channels, out, transpose);
  } else {
    lattice_->filter<double>(values, channels, out, transpose);
  }
}

void FilterPlan::off_diagonal(std::span<const double> values, int channels, std::span<double> out,
                              bool transpose, Precision precision) const {
  const std::size_t c = static_cast<std::size_t>(channels);
  if (backend_ == FilterBackend::kExact) {
    // Symmetric kernel: visit each unordered pair once.
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < size_; ++i) {
      const double* fi = features_.data() + static_cast<std::size_t>(i) * dim_;
      const double* vi = values.data() + i * c;
      double* oi = out.data() + i * c;
      for (int j = i + 1; j < size_; ++j) {
        const double* fj = features_.data() + static_cast<std::size_t>(j) * dim_;
        const double k = std::exp(-0.5 * squared_distance(fi, fj, dim_));
        const double* vj = values.data() + j * c;
        double* oj = out.data() + j * c;
        for (std::size_t ch = 0; ch < c; ++ch) {
          oi[ch] += k * vj[ch];
          oj[ch] += k * vi[ch];
        }
      }
    }
    return;
  }
  full_sum(values, channels, out, transpose, precision);
  for (std::size_t i = 0; i < static_cast<std::size_t>(size_); ++i) {
    const double s = self_weights_[i];
    for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] -= s * values[i * c + ch];
  }
}

void FilterPlan::apply(std::span<const double> values, int channels, std::span<double> out,
                       Precision precision) const {
  check_shape(values, channels, out);
  off_diagonal(values, channels, out, false, precision);
  const std::size_t c = static_cast<std::size_t>(channels);
  for (std::size_t i = 0; i < static_cast<std::size_t>(size_); ++i) {
    const double inv = inverse_normalizers_[i];
    for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] *= inv;
  }
}

std::vector<double> FilterPlan::apply(std::span<const double> values, int channels,
                                      Precision precision) const {
  std::vector<double> out(values.size());
  apply(values, channels, out, precision);
  return out;
}

void FilterPlan::apply_transpose(std::span<const double> values, int channels,
                                 std::span<double> out, Precision precision) const {
  check_shape(values, channels, out);
  const std::size_t c = static_cast<std::size_t>(channels);
  std::vector<double> scaled(values.begin(), values.end());
  for (std::size_t i = 0; i < static_cast<std::size_t>(size_); ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) scaled[i * c + ch] *= inverse_normalizers_[i];
  }
  off_diagonal(scaled, channels, out, true, precision);
}

void FilterPlan::apply_unnormalized(std::span<const double> values, int channels,
                                    std::span<double> out, Precision precision) const {
  check_shape(values, channels, out);
  off_diagonal(values, channels, out, false, precision);
}

}  // namespace matfuse
