// Random instances and small fixtures shared by the test suites.
#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "surglab/rng.hpp"
#include "surglab/segmentation.hpp"
#include "surglab/types.hpp"

namespace surglab::testing {

inline const std::vector<std::string> kVerbs = {"hold", "cut", "coagulate", "aspirate", "retract"};
inline const std::vector<std::string> kInstruments = {"classic forceps", "scalpel", "needle-holders", "bipolar",
                                                      "suction", "retractor"};
inline const std::vector<std::string> kStructures = {"muscle", "disc", "ligament", "fascia", "bone"};

/// Non-overlapping annotations for one hand on a half-second grid.
inline std::vector<HandAnnotation> random_hand(Rng& rng, Hand hand, std::size_t max_records,
                                               bool allow_gaps = true) {
  std::vector<HandAnnotation> out;
  const std::size_t n = uniform_index(rng, max_records + 1);
  double t = 0.5 * static_cast<double>(uniform_index(rng, 6));
  for (std::size_t k = 0; k < n; ++k) {
    HandAnnotation a;
    a.hand = hand;
    a.verb = kVerbs[uniform_index(rng, kVerbs.size())];
    a.instrument = kInstruments[uniform_index(rng, kInstruments.size())];
    a.structure = kStructures[uniform_index(rng, kStructures.size())];
    a.t_start = t;
    a.t_end = t + 0.5 * static_cast<double>(1 + uniform_index(rng, 12));
    t = a.t_end;
    if (allow_gaps && bernoulli(rng, 0.3)) t += 0.5 * static_cast<double>(1 + uniform_index(rng, 6));
    out.push_back(std::move(a));
  }
  return out;
}

/// Total length of the union of both hands' annotated intervals.
inline double union_length(std::vector<HandAnnotation> all) {
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.t_start < b.t_start; });
  double total = 0.0, lo = 0.0, hi = 0.0;
  bool open = false;
  for (const auto& a : all) {
    if (open && a.t_start <= hi) {
      hi = std::max(hi, a.t_end);
      continue;
    }
    if (open) total += hi - lo;
    lo = a.t_start;
    hi = a.t_end;
    open = true;
  }
  if (open) total += hi - lo;
  return total;
}

/// A random intervention built through merge_hands; never empty.
inline Intervention random_intervention(Rng& rng, Vocabulary& vocab, const std::string& id,
                                        std::size_t max_records = 12, bool allow_gaps = true) {
  Intervention iv;
  iv.id = id;
  iv.site = "site";
  iv.surgeon_id = "s1";
  do {
    const auto left = random_hand(rng, Hand::Left, max_records, allow_gaps);
    const auto right = random_hand(rng, Hand::Right, max_records, allow_gaps);
    iv.activities = merge_hands(left, right, vocab);
  } while (iv.activities.empty());
  iv.phases = {{"opening", 0.0, iv.activities.back().t_end / 2.0 + 0.5},
               {"closing", iv.activities.back().t_end / 2.0 + 0.5, iv.activities.back().t_end + 1.0}};
  return iv;
}

inline Dataset random_dataset(Rng& rng, std::size_t interventions, std::size_t max_records = 12) {
  Dataset d;
  d.name = "random";
  for (std::size_t k = 0; k < interventions; ++k)
    d.interventions.push_back(random_intervention(rng, d.vocab, "iv" + std::to_string(100 + k), max_records));
  return d;
}

inline ActivityTuple tuple(Vocabulary& vocab, std::array<std::string, 3> left, std::array<std::string, 3> right,
                           double t_start, double t_end) {
  ActivityTuple t;
  t.t_start = t_start;
  t.t_end = t_end;
  for (std::size_t k = 0; k < kKinds; ++k) {
    t.labels[k] = left[k] == "none" ? kNone : vocab.intern(kAllKinds[k], left[k]);
    t.labels[k + kKinds] = right[k] == "none" ? kNone : vocab.intern(kAllKinds[k], right[k]);
  }
  return t;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("surglab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace surglab::testing
