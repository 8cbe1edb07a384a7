#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace matfuse {

/// Permutohedral lattice approximation of a unit-variance Gaussian filter.
///
/// The operator is K = alpha * S^T B_d ... B_0 S where S splats each point onto
/// the d+1 vertices of its enclosing simplex with barycentric weights, B_j is
/// the [1/2, 1, 1/2] blur along lattice direction j and alpha rescales so that a
/// point sitting on a vertex has unit self-weight. Blurring in reverse direction
/// order yields the exact transpose.
class PermutohedralLattice {
 public:
  PermutohedralLattice(std::span<const double> features, int dim);

  int size() const { return size_; }
  int dim() const { return dim_; }
  std::size_t vertex_count() const { return vertices_; }

  /// out = K v (or K^T v when `reverse`), `channels` interleaved channels per point.
  template <typename Scalar>
  void filter(std::span<const double> values, int channels, std::span<double> out,
              bool reverse) const;

  /// Diagonal entries K_ii of the operator (identical for K and K^T).
  std::vector<double> diagonal() const;

 private:
  int neighbor(int vertex, int direction, int side) const {
    return neighbors_[(static_cast<std::size_t>(direction) * vertices_ + vertex) * 2 + side];
  }

  int size_ = 0;
  int dim_ = 0;
  std::size_t vertices_ = 0;
  double alpha_ = 1.0;
  std::vector<int> point_vertex_;     // size * (dim + 1)
  std::vector<double> point_weight_;  // size * (dim + 1)
  std::vector<int> neighbors_;        // (dim + 1) * vertices * 2, -1 when absent
};

extern template void PermutohedralLattice::filter<double>(std::span<const double>, int,
                                                          std::span<double>, bool) const;
extern template void PermutohedralLattice::filter<float>(std::span<const double>, int,
                                                         std::span<double>, bool) const;

}  // namespace matfuse
