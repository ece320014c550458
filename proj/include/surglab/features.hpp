// Sparse feature vectors shared by the encoder and the sequence model.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace surglab {

/// Explicit (index, value) entries of one feature vector. Entries may hold
/// zero values; an explicit zero is still an entry.
struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  void push(std::uint32_t i, double v) {
    index.push_back(i);
    value.push_back(v);
  }
  std::size_t nnz() const { return index.size(); }

  bool operator==(const SparseVector&) const = default;
};

/// One model input: a window of feature vectors, oldest first.
using FeatureWindow = std::vector<SparseVector>;

inline std::vector<double> densify(const SparseVector& v, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  for (std::size_t k = 0; k < v.nnz(); ++k) out.at(v.index[k]) += v.value[k];
  return out;
}

/// Keeps every non-zero entry of a dense vector.
inline SparseVector sparsify(std::span<const double> dense) {
  SparseVector out;
  for (std::size_t i = 0; i < dense.size(); ++i)
    if (dense[i] != 0.0) out.push(static_cast<std::uint32_t>(i), dense[i]);
  return out;
}

}  // namespace surglab
