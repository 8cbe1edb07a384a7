#include "matfuse/permutohedral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "matfuse/error.hpp"

namespace matfuse {
namespace {

/// Open-addressing table from integer lattice keys (d coordinates) to dense ids.
class KeyTable {
 public:
  KeyTable(int dim, std::size_t expected) : dim_(dim) {
    std::size_t capacity = 16;
    while (capacity < 2 * expected) capacity <<= 1;
    slots_.assign(capacity, -1);
    keys_.reserve(expected * dim);
  }

  std::size_t size() const { return count_; }
  const int* key(int id) const { return keys_.data() + static_cast<std::size_t>(id) * dim_; }

  int find(const int* key) const {
    const std::size_t mask = slots_.size() - 1;
    for (std::size_t h = hash(key) & mask;; h = (h + 1) & mask) {
      const int id = slots_[h];
      if (id < 0) return -1;
      if (std::equal(key, key + dim_, this->key(id))) return id;
    }
  }

  int insert(const int* key) {
    if (2 * (count_ + 1) > slots_.size()) grow();
    const std::size_t mask = slots_.size() - 1;
    for (std::size_t h = hash(key) & mask;; h = (h + 1) & mask) {
      const int id = slots_[h];
      if (id < 0) {
        slots_[h] = static_cast<int>(count_);
        keys_.insert(keys_.end(), key, key + dim_);
        return static_cast<int>(count_++);
      }
      if (std::equal(key, key + dim_, this->key(id))) return id;
    }
  }

 private:
  std::size_t hash(const int* key) const {
    std::uint64_t h = 0;
    for (int i = 0; i < dim_; ++i) {
      h += static_cast<std::uint64_t>(static_cast<std::uint32_t>(key[i]));
      h *= 2531011ULL;
    }
    return static_cast<std::size_t>(h ^ (h >> 29));
  }

  void grow() {
    std::vector<int> slots(slots_.size() * 2, -1);
    const std::size_t mask = slots.size() - 1;
    for (std::size_t id = 0; id < count_; ++id) {
      std::size_t h = hash(key(static_cast<int>(id))) & mask;
      while (slots[h] >= 0) h = (h + 1) & mask;
      slots[h] = static_cast<int>(id);
    }
    slots_ = std::move(slots);
  }

  int dim_;
  std::size_t count_ = 0;
  std::vector<int> slots_;
  std::vector<int> keys_;
};

/// Sparse vector over lattice vertices with a shared dense slot map.
struct SparseVector {
  std::vector<int> index;
  std::vector<double> value;
  void clear() {
    index.clear();
    value.clear();
  }
};

}  // namespace

PermutohedralLattice::PermutohedralLattice(std::span<const double> features, int dim)
    : dim_(dim) {
  if (dim < 1) throw InvalidInput("lattice feature dimension must be >= 1");
  if (features.empty() || features.size() % dim != 0) {
    throw InvalidInput("lattice features must hold N rows of dim values");
  }
  size_ = static_cast<int>(features.size() / dim);
  const int d = dim_;
  const int d1 = d + 1;

  point_vertex_.resize(static_cast<std::size_t>(size_) * d1);
  point_weight_.resize(static_cast<std::size_t>(size_) * d1);
  KeyTable table(d, static_cast<std::size_t>(size_) * d1 / 4 + 16);

  // Elevation scales the features so the lattice blur approximates a
  // unit-variance Gaussian.
  const double inv_std_dev = std::sqrt(2.0 / 3.0) * d1;
  std::vector<double> scale(d);
  for (int i = 0; i < d; ++i) scale[i] = inv_std_dev / std::sqrt(static_cast<double>((i + 1) * (i + 2)));

  // canonical[r * d1 + k]: offset of coordinate with rank k for the remainder-r vertex.
  std::vector<int> canonical(static_cast<std::size_t>(d1) * d1);
  for (int r = 0; r <= d; ++r) {
    for (int k = 0; k <= d - r; ++k) canonical[r * d1 + k] = r;
    for (int k = d - r + 1; k <= d; ++k) canonical[r * d1 + k] = r - d1;
  }

  std::vector<double> elevated(d1), barycentric(d1 + 1);
  std::vector<int> rem0(d1), rank(d1), key(d);
  for (int p = 0; p < size_; ++p) {
    const double* f = features.data() + static_cast<std::size_t>(p) * d;
    double running = 0.0;
    for (int j = d; j > 0; --j) {
      const double cf = f[j - 1] * scale[j - 1];
      elevated[j] = running - j * cf;
      running += cf;
    }
    elevated[0] = running;

    // Nearest remainder-0 lattice point.
    int sum = 0;
    for (int i = 0; i <= d; ++i) {
      const double v = elevated[i] / d1;
      const double up = std::ceil(v) * d1;
      const double down = std::floor(v) * d1;
      rem0[i] = static_cast<int>(up - elevated[i] < elevated[i] - down ? up : down);
      sum += rem0[i] / d1;
    }

    std::fill(rank.begin(), rank.end(), 0);
    for (int i = 0; i < d; ++i) {
      const double di = elevated[i] - rem0[i];
      for (int j = i + 1; j <= d; ++j) {
        if (di < elevated[j] - rem0[j]) {
          ++rank[i];
        } else {
          ++rank[j];
        }
      }
    }

    // Project back onto the hyperplane when the rounded point left it.
    for (int i = 0; i <= d; ++i) {
      rank[i] += sum;
      if (rank[i] < 0) {
        rank[i] += d1;
        rem0[i] += d1;
      } else if (rank[i] > d) {
        rank[i] -= d1;
        rem0[i] -= d1;
      }
    }

    std::fill(barycentric.begin(), barycentric.end(), 0.0);
    for (int i = 0; i <= d; ++i) {
      const double v = (elevated[i] - rem0[i]) / d1;
      barycentric[d - rank[i]] += v;
      barycentric[d - rank[i] + 1] -= v;
    }
    barycentric[0] += 1.0 + barycentric[d1];

    for (int r = 0; r <= d; ++r) {
      for (int i = 0; i < d; ++i) key[i] = rem0[i] + canonical[r * d1 + rank[i]];
      const std::size_t slot = static_cast<std::size_t>(p) * d1 + r;
      point_vertex_[slot] = table.insert(key.data());
      point_weight_[slot] = barycentric[r];
    }
  }

  vertices_ = table.size();
  neighbors_.assign(static_cast<std::size_t>(d1) * vertices_ * 2, -1);
  std::vector<int> lower(d), upper(d);
  for (int j = 0; j <= d; ++j) {
    for (std::size_t v = 0; v < vertices_; ++v) {
      const int* k = table.key(static_cast<int>(v));
      for (int i = 0; i < d; ++i) {
        lower[i] = k[i] - 1;
        upper[i] = k[i] + 1;
      }
      if (j < d) {
        lower[j] = k[j] + d;
        upper[j] = k[j] - d;
      }
      const std::size_t base = (static_cast<std::size_t>(j) * vertices_ + v) * 2;
      neighbors_[base] = table.find(lower.data());
      neighbors_[base + 1] = table.find(upper.data());
    }
  }

  alpha_ = 1.0 / (1.0 + std::pow(2.0, -d));
}

template <typename Scalar>
void PermutohedralLattice::filter(std::span<const double> values, int channels,
                                  std::span<double> out, bool reverse) const {
  const int d1 = dim_ + 1;
  const std::size_t c = static_cast<std::size_t>(channels);
  // Slot 0 is a permanent zero standing in for absent neighbours.
  std::vector<Scalar> buffer((vertices_ + 1) * c, Scalar(0));
  std::vector<Scalar> scratch((vertices_ + 1) * c, Scalar(0));

  for (int p = 0; p < size_; ++p) {
    const double* in = values.data() + static_cast<std::size_t>(p) * c;
    for (int r = 0; r < d1; ++r) {
      const std::size_t slot = static_cast<std::size_t>(p) * d1 + r;
      Scalar* target = buffer.data() + (point_vertex_[slot] + 1) * c;
      const Scalar w = static_cast<Scalar>(point_weight_[slot]);
      for (std::size_t k = 0; k < c; ++k) target[k] += w * static_cast<Scalar>(in[k]);
    }
  }

  for (int step = 0; step < d1; ++step) {
    const int j = reverse ? dim_ - step : step;
    for (std::size_t v = 0; v < vertices_; ++v) {
      const Scalar* self = buffer.data() + (v + 1) * c;
      const Scalar* lo = buffer.data() + (neighbor(static_cast<int>(v), j, 0) + 1) * c;
      const Scalar* hi = buffer.data() + (neighbor(static_cast<int>(v), j, 1) + 1) * c;
      Scalar* dst = scratch.data() + (v + 1) * c;
      for (std::size_t k = 0; k < c; ++k) dst[k] = self[k] + Scalar(0.5) * (lo[k] + hi[k]);
    }
    std::swap(buffer, scratch);
  }

  for (int p = 0; p < size_; ++p) {
    double* dst = out.data() + static_cast<std::size_t>(p) * c;
    std::fill(dst, dst + c, 0.0);
    for (int r = 0; r < d1; ++r) {
      const std::size_t slot = static_cast<std::size_t>(p) * d1 + r;
      const Scalar* src = buffer.data() + (point_vertex_[slot] + 1) * c;
      const double w = point_weight_[slot] * alpha_;
      for (std::size_t k = 0; k < c; ++k) dst[k] += w * static_cast<double>(src[k]);
    }
  }
}

template void PermutohedralLattice::filter<double>(std::span<const double>, int, std::span<double>,
                                                   bool) const;
template void PermutohedralLattice::filter<float>(std::span<const double>, int, std::span<double>,
                                                  bool) const;

std::vector<double> PermutohedralLattice::diagonal() const {
  // K_ii = alpha * b_i^T B_d ... B_0 b_i. Split the blur chain in two halves
  // and meet in the middle: (B_{h+1} ... B_d b)^T (B_h ... B_0 b), each B_j
  // being symmetric.
  const int d1 = dim_ + 1;
  const int half = dim_ / 2;
  std::vector<int> slot(vertices_, -1);
  std::vector<double> dense(vertices_, 0.0);
  SparseVector left, right, next;

  auto blur = [&](const SparseVector& in, int j, SparseVector& result) {
    result.clear();
    auto add = [&](int v, double x) {
      if (v < 0) return;
      int& s = slot[v];
      if (s < 0) {
        s = static_cast<int>(result.index.size());
        result.index.push_back(v);
        result.value.push_back(x);
      } else {
        result.value[s] += x;
      }
    };
    for (std::size_t k = 0; k < in.index.size(); ++k) {
      const int v = in.index[k];
      const double x = in.value[k];
      add(v, x);
      add(neighbor(v, j, 0), 0.5 * x);
      add(neighbor(v, j, 1), 0.5 * x);
    }
    for (int v : result.index) slot[v] = -1;
  };

  std::vector<double> diag(size_);
  for (int p = 0; p < size_; ++p) {
    left.clear();
    for (int r = 0; r < d1; ++r) {
      const std::size_t s = static_cast<std::size_t>(p) * d1 + r;
      left.index.push_back(point_vertex_[s]);
      left.value.push_back(point_weight_[s]);
    }
    right = left;
    for (int j = 0; j <= half; ++j) {
      blur(right, j, next);
      std::swap(right, next);
    }
    for (int j = dim_; j > half; --j) {
      blur(left, j, next);
      std::swap(left, next);
    }
    for (std::size_t k = 0; k < right.index.size(); ++k) dense[right.index[k]] = right.value[k];
    double dot = 0.0;
    for (std::size_t k = 0; k < left.index.size(); ++k) dot += left.value[k] * dense[left.index[k]];
    for (int v : right.index) dense[v] = 0.0;
    diag[p] = alpha_ * dot;
  }
  return diag;
}

}  // namespace matfuse
