// Label noise and recognition delay applied to observed activity sequences.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "surglab/encoding.hpp"
#include "surglab/rng.hpp"
#include "surglab/segmentation.hpp"
#include "surglab/types.hpp"

namespace surglab {

enum class NoiseKind { Uniform, Frequency, Pairwise, NoSignal };

inline std::string_view noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::Uniform: return "uniform";
    case NoiseKind::Frequency: return "frequency";
    case NoiseKind::Pairwise: return "pairwise";
    case NoiseKind::NoSignal: return "nosignal";
  }
  return "?";
}

inline NoiseKind parse_noise_kind(std::string_view s) {
  if (s == "uniform") return NoiseKind::Uniform;
  if (s == "frequency") return NoiseKind::Frequency;
  if (s == "pairwise") return NoiseKind::Pairwise;
  if (s == "nosignal" || s == "no_signal" || s == "none") return NoiseKind::NoSignal;
  throw ValidationError("unknown noise kind '" + std::string(s) + "'");
}

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Uniform;
  double rate = 0.0;
  std::size_t repetitions = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("noise rate must lie in [0,1]");
    if (repetitions < 1) throw ValidationError("noise repetitions must be >= 1");
  }
};

struct DelaySpec {
  double delay_s = 0.0;
  /// Optional per-position delays; when absent every position uses delay_s.
  std::optional<std::array<double, kPositions>> per_position;

  double delay(std::size_t position) const {
    return per_position ? (*per_position)[position] : delay_s;
  }
  void validate() const {
    if (!(delay_s >= 0.0)) throw ValidationError("delay must be >= 0");
    if (per_position)
      for (double d : *per_position)
        if (!(d >= 0.0)) throw ValidationError("delay must be >= 0");
  }
};

/// Duration mass of every label at every position, over a whole dataset.
class FrequencyTable {
 public:
  FrequencyTable() = default;

  explicit FrequencyTable(const Dataset& d) {
    for (std::size_t p = 0; p < kPositions; ++p) mass_[p].assign(d.vocab.size(kind_of(p)), 0.0);
    for (const auto& iv : d.interventions)
      for (const auto& a : iv.activities)
        for (std::size_t p = 0; p < kPositions; ++p) {
          auto& m = mass_[p];
          const auto id = static_cast<std::size_t>(a.labels[p]);
          if (id >= m.size()) m.resize(id + 1, 0.0);
          m[id] += a.duration();
        }
    for (std::size_t p = 0; p < kPositions; ++p) {
      total_[p] = 0.0;
      for (double m : mass_[p]) total_[p] += m;
    }
  }

  double mass(std::size_t position, LabelId id) const {
    const auto& m = mass_[position];
    return static_cast<std::size_t>(id) < m.size() ? m[static_cast<std::size_t>(id)] : 0.0;
  }
  double probability(std::size_t position, LabelId id) const {
    return total_[position] > 0.0 ? mass(position, id) / total_[position] : 0.0;
  }
  std::size_t labels(std::size_t position) const { return mass_[position].size(); }

  /// The two data labels with the largest mass (lower id wins ties); fewer
  /// when the position has fewer than two labels with positive mass.
  std::vector<LabelId> top_two(std::size_t position) const {
    std::vector<LabelId> ids;
    for (std::size_t id = kFirstDataLabel; id < mass_[position].size(); ++id)
      if (mass_[position][id] > 0.0) ids.push_back(static_cast<LabelId>(id));
    std::stable_sort(ids.begin(), ids.end(),
                     [&](LabelId a, LabelId b) { return mass(position, a) > mass(position, b); });
    if (ids.size() > 2) ids.resize(2);
    return ids;
  }

 private:
  std::array<std::vector<double>, kPositions> mass_;
  std::array<double, kPositions> total_{};
};

inline FrequencyTable build_frequency_table(const Dataset& d) {
  if (d.interventions.empty()) throw ValidationError("build_frequency_table: empty dataset");
  return FrequencyTable(d);
}

/// Number of corrupted occurrences: nearest integer, halves rounded up.
inline std::size_t corrupted_count(double rate, std::size_t occurrences) {
  const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(occurrences) + 0.5));
  return std::min(k, occurrences);
}

/// Corrupts each of the six positions independently: round(rate * n)
/// occurrences are chosen uniformly without replacement and relabelled.
/// Uniform and Frequency noise never keep the original label; Pairwise
/// only touches occurrences of the position's two heaviest labels and swaps
/// them; NoSignal writes `none`.
inline std::vector<ActivityTuple> corrupt(std::span<const ActivityTuple> seq, const NoiseSpec& spec,
                                          const Vocabulary& vocab,
                                          const FrequencyTable* freq = nullptr) {
  spec.validate();
  const bool needs_table = spec.kind == NoiseKind::Frequency || spec.kind == NoiseKind::Pairwise;
  if (needs_table && freq == nullptr)
    throw ValidationError(std::string(noise_kind_name(spec.kind)) + " noise needs a frequency table");

  std::vector<ActivityTuple> out(seq.begin(), seq.end());
  const std::size_t k = corrupted_count(spec.rate, out.size());
  if (k == 0) return out;

  if (spec.kind == NoiseKind::Uniform || spec.kind == NoiseKind::Frequency)
    for (ElementKind kind : kAllKinds)
      if (vocab.data_size(kind) < 2)
        throw ValidationError("cannot corrupt " + std::string(kind_name(kind)) +
                              ": vocabulary has no replacement label");

  Rng rng(spec.seed);
  std::vector<double> weights;
  for (std::size_t p = 0; p < kPositions; ++p) {
    const auto kind = kind_of(p);
    const auto labels = static_cast<LabelId>(vocab.size(kind));
    std::vector<LabelId> pair;
    if (spec.kind == NoiseKind::Pairwise) pair = freq->top_two(p);

    for (std::size_t idx : sample_without_replacement(rng, out.size(), k)) {
      LabelId& label = out[idx].labels[p];
      switch (spec.kind) {
        case NoiseKind::Uniform: {
          const bool is_data = !is_reserved(label);
          const auto choices = static_cast<std::size_t>(labels - kFirstDataLabel) - (is_data ? 1 : 0);
          auto pick = static_cast<LabelId>(kFirstDataLabel + uniform_index(rng, choices));
          if (is_data && pick >= label) ++pick;
          label = pick;
          break;
        }
        case NoiseKind::Frequency: {
          weights.assign(static_cast<std::size_t>(labels), 0.0);
          for (LabelId id = kFirstDataLabel; id < labels; ++id)
            if (id != label) weights[static_cast<std::size_t>(id)] = freq->mass(p, id);
          double total = 0.0;
          for (double w : weights) total += w;
          if (!(total > 0.0))
            throw ValidationError("frequency noise: no other " + std::string(kind_name(kind)) +
                                  " has positive mass");
          label = static_cast<LabelId>(sample_discrete(rng, weights));
          break;
        }
        case NoiseKind::Pairwise:
          if (pair.size() == 2) {
            if (label == pair[0]) label = pair[1];
            else if (label == pair[1]) label = pair[0];
          }
          break;
        case NoiseKind::NoSignal:
          label = kNone;
          break;
      }
    }
  }
  return out;
}

/// Observed sequence when every visible position reaches the observer
/// `delay` seconds late.
///
/// Each visible position's label timeline (`none` outside activities) is
/// shifted later, masked positions read `unknown`, and the result is
/// resegmented at every true and shifted change point over
/// [first start, last end + max delay]. Abutting equal tuples are merged.
/// Segments observing nothing (all visible positions `none`) that do not
/// overlap any true activity are dropped, so idle gaps stay gaps.
inline std::vector<ActivityTuple> apply_delay(const Intervention& iv, const DelaySpec& spec,
                                              const MaskConfig& m) {
  spec.validate();
  const auto& acts = iv.activities;
  if (acts.empty()) return {};

  double max_delay = 0.0;
  for (std::size_t p = 0; p < kPositions; ++p)
    if (m.visible(p)) max_delay = std::max(max_delay, spec.delay(p));
  const double begin = acts.front().t_start;
  const double end = acts.back().t_end + max_delay;

  std::vector<double> points{begin, end};
  for (const auto& a : acts) {
    points.push_back(a.t_start);
    points.push_back(a.t_end);
  }
  for (std::size_t p = 0; p < kPositions; ++p) {
    if (!m.visible(p)) continue;
    const double d = spec.delay(p);
    for (const auto& a : acts) {
      points.push_back(a.t_start + d);
      points.push_back(a.t_end + d);
    }
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  std::array<std::size_t, kPositions> cursor{};
  std::vector<ActivityTuple> out;
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    const double a = points[k], b = points[k + 1];
    ActivityTuple t;
    t.t_start = a;
    t.t_end = b;
    for (std::size_t p = 0; p < kPositions; ++p) {
      if (!m.visible(p)) {
        t.labels[p] = kUnknown;
        continue;
      }
      const double d = spec.delay(p);
      auto& c = cursor[p];
      while (c < acts.size() && acts[c].t_end + d <= a) ++c;
      t.labels[p] = (c < acts.size() && acts[c].t_start + d <= a) ? acts[c].labels[p] : kNone;
    }
    out.push_back(t);
  }

  auto observes_nothing = [&](const ActivityTuple& t) {
    for (std::size_t p = 0; p < kPositions; ++p)
      if (m.visible(p) && t.labels[p] != kNone) return false;
    return true;
  };
  auto overlaps_truth = [&](const ActivityTuple& t) {
    auto it = std::lower_bound(acts.begin(), acts.end(), t.t_start,
                               [](const ActivityTuple& a, double x) { return a.t_end <= x; });
    return it != acts.end() && it->t_start < t.t_end;
  };
  std::erase_if(out, [&](const ActivityTuple& t) { return observes_nothing(t) && !overlaps_truth(t); });
  merge_equal_neighbours(out);
  return out;
}

}  // namespace surglab
