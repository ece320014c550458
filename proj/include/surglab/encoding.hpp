// Visibility masks and one-hot window encoding of activity sequences.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "surglab/features.hpp"
#include "surglab/types.hpp"

namespace surglab {

/// Replaces hidden positions with `unknown`; timestamps are untouched.
inline ActivityTuple apply_mask(ActivityTuple t, const MaskConfig& m) {
  for (std::size_t p = 0; p < kPositions; ++p)
    if (!m.visible(p)) t.labels[p] = kUnknown;
  return t;
}

/// Block layout of one encoded tuple: six one-hot blocks, each sized to its
/// kind's vocabulary (reserved tokens included), optionally followed by the
/// activity duration in seconds.
class FeatureLayout {
 public:
  FeatureLayout(const Vocabulary& vocab, bool with_duration) : with_duration_(with_duration) {
    std::uint32_t offset = 0;
    for (std::size_t p = 0; p < kPositions; ++p) {
      offset_[p] = offset;
      size_[p] = static_cast<std::uint32_t>(vocab.size(kind_of(p)));
      offset += size_[p];
    }
    dim_ = offset + (with_duration ? 1u : 0u);
  }

  std::size_t dim() const { return dim_; }
  bool with_duration() const { return with_duration_; }
  std::uint32_t block_offset(std::size_t position) const { return offset_[position]; }
  std::uint32_t block_size(std::size_t position) const { return size_[position]; }
  /// Index of the duration feature; only meaningful when with_duration().
  std::uint32_t duration_index() const { return static_cast<std::uint32_t>(dim_ - 1); }

  /// Sparse encoding of a single (already masked) tuple. The duration entry is
  /// always explicit, even when zero.
  SparseVector encode(const Labels& labels, double duration) const {
    SparseVector v;
    v.index.reserve(kPositions + 1);
    v.value.reserve(kPositions + 1);
    for (std::size_t p = 0; p < kPositions; ++p) {
      const auto id = static_cast<std::uint32_t>(labels[p]);
      if (id >= size_[p]) throw ValidationError("label id outside the encoder's vocabulary");
      v.push(offset_[p] + id, 1.0);
    }
    if (with_duration_) v.push(duration_index(), duration);
    return v;
  }

 private:
  std::array<std::uint32_t, kPositions> offset_{};
  std::array<std::uint32_t, kPositions> size_{};
  std::size_t dim_ = 0;
  bool with_duration_ = false;
};

inline constexpr Labels kPaddingLabels = {kUnknown, kUnknown, kUnknown, kUnknown, kUnknown, kUnknown};

/// Encodes activities i-n .. i (n+1 steps) under mask `m`. Steps before the
/// start of the sequence are all-`unknown` padding with duration 0.
inline FeatureWindow encode_window_sparse(std::span<const ActivityTuple> seq, std::size_t i,
                                          std::size_t n, const MaskConfig& m,
                                          const FeatureLayout& layout) {
  if (i >= seq.size()) throw ValidationError("window index out of range");
  if (n < 1) throw ValidationError("window length must be at least 1");
  FeatureWindow window;
  window.reserve(n + 1);
  for (std::size_t step = 0; step <= n; ++step) {
    const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(n - step);
    if (j < 0) {
      window.push_back(layout.encode(kPaddingLabels, 0.0));
    } else {
      const auto masked = apply_mask(seq[static_cast<std::size_t>(j)], m);
      window.push_back(layout.encode(masked.labels, masked.duration()));
    }
  }
  return window;
}

/// Dense form of encode_window_sparse: n+1 block-one-hot vectors.
inline std::vector<std::vector<double>> encode_window(std::span<const ActivityTuple> seq,
                                                      std::size_t i, std::size_t n,
                                                      const MaskConfig& m, const Vocabulary& vocab,
                                                      bool with_duration) {
  const FeatureLayout layout(vocab, with_duration);
  std::vector<std::vector<double>> out;
  for (const auto& step : encode_window_sparse(seq, i, n, m, layout))
    out.push_back(densify(step, layout.dim()));
  return out;
}

}  // namespace surglab
