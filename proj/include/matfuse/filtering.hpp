#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace matfuse {

enum class FilterBackend {
  kExact,    ///< literal O(N^2) double sum
  kLattice,  ///< permutohedral splat / blur / slice
};

enum class Precision { kDouble, kSingle };

std::string_view to_string(FilterBackend backend);
FilterBackend parse_backend(std::string_view name);

class PermutohedralLattice;

/// Gaussian filter k(f_i, f_j) = exp(-|f_i - f_j|^2 / 2) over a fixed set of
/// already-scaled feature vectors.
///
/// Messages exclude the self term and are normalized per point:
///
///   m_i = (sum_{j != i} k_ij v_j) / d_i,   d_i = sum_{j != i} k_ij
///
/// Points whose neighbour mass is zero (N = 1, or every other point is far
/// away) report d_i = 1 and receive a zero message. A plan is immutable after
/// construction and may be shared by concurrent callers.
class FilterPlan {
 public:
  /// `features` holds N rows of `dim` values, row-major.
  FilterPlan(std::span<const double> features, int dim, FilterBackend backend);
  ~FilterPlan();
  FilterPlan(FilterPlan&&) noexcept;
  FilterPlan& operator=(FilterPlan&&) noexcept;
  FilterPlan(const FilterPlan&) = delete;
  FilterPlan& operator=(const FilterPlan&) = delete;

  int size() const { return size_; }
  int dim() const { return dim_; }
  FilterBackend backend() const { return backend_; }

  /// Per-point neighbour mass d_i (1 for isolated points).
  std::span<const double> normalizers() const { return normalizers_; }

  /// Self-weight of the underlying operator: 1 for the exact kernel, the
  /// lattice's own diagonal otherwise.
  std::span<const double> self_weights() const { return self_weights_; }

  /// Normalized, self-excluded message for `channels` interleaved value channels.
  void apply(std::span<const double> values, int channels, std::span<double> out,
             Precision precision = Precision::kDouble) const;
  std::vector<double> apply(std::span<const double> values, int channels,
                            Precision precision = Precision::kDouble) const;

  /// Transpose of `apply`: out = K_off^T (D^{-1} v). For the exact kernel this
  /// equals K_off (D^{-1} v) since K is symmetric.
  void apply_transpose(std::span<const double> values, int channels, std::span<double> out,
                       Precision precision = Precision::kDouble) const;

  /// Self-excluded sum without normalization: out_i = sum_{j != i} k_ij v_j.
  void apply_unnormalized(std::span<const double> values, int channels, std::span<double> out,
                          Precision precision = Precision::kDouble) const;

  /// Number of lattice vertices (0 for the exact backend).
  std::size_t lattice_vertices() const;

 private:
  void full_sum(std::span<const double> values, int channels, std::span<double> out,
                bool transpose, Precision precision) const;
  void off_diagonal(std::span<const double> values, int channels, std::span<double> out,
                    bool transpose, Precision precision) const;
  void check_shape(std::span<const double> values, int channels, std::span<double> out) const;

  int size_ = 0;
  int dim_ = 0;
  FilterBackend backend_ = FilterBackend::kExact;
  std::vector<double> features_;
  std::vector<double> normalizers_;
  std::vector<double> inverse_normalizers_;
  std::vector<double> self_weights_;
  std::unique_ptr<PermutohedralLattice> lattice_;
};

/// Exact Gaussian kernel value between two feature vectors.
double gaussian_kernel(std::span<const double> a, std::span<const double> b);

}  // namespace matfuse
