// Per-dataset summary statistics (interventions, durations, vocabulary use).
#pragma once

#include <array>
#include <cmath>
#include <set>
#include <tuple>
#include <string>
#include <vector>

#include <json.hpp>

#include "surglab/types.hpp"

namespace surglab {

struct DatasetStats {
  std::size_t interventions = 0;
  double duration_min_mean = 0.0;
  double duration_min_sd = 0.0;
  double activities_mean = 0.0;
  double activities_sd = 0.0;
  std::size_t unique_activities = 0;
  std::size_t unique_phases = 0;
  std::size_t unique_verbs = 0;
  std::size_t unique_instruments = 0;
  std::size_t unique_structures = 0;
  std::size_t surgeons = 0;
};

namespace detail {

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace detail

/// Sample (n-1) standard deviations; labels are counted when they occur in
/// the data, reserved tokens excluded.
inline DatasetStats dataset_stats(const Dataset& d) {
  if (d.interventions.empty()) throw ValidationError("dataset_stats: empty dataset");
  DatasetStats s;
  s.interventions = d.interventions.size();
  std::vector<double> durations, counts;
  std::set<Labels> tuples;
  std::set<std::string> phases, surgeons;
  std::array<std::set<LabelId>, kKinds> used;
  for (const auto& iv : d.interventions) {
    durations.push_back(iv.duration() / 60.0);
    counts.push_back(static_cast<double>(iv.activities.size()));
    for (const auto& p : iv.phases) phases.insert(p.name);
    if (!iv.surgeon_id.empty()) surgeons.insert(iv.surgeon_id);
    for (const auto& a : iv.activities) {
      tuples.insert(a.labels);
      for (std::size_t p = 0; p < kPositions; ++p)
        if (!is_reserved(a.labels[p])) used[p % kKinds].insert(a.labels[p]);
    }
  }
  std::tie(s.duration_min_mean, s.duration_min_sd) = detail::mean_sd(durations);
  std::tie(s.activities_mean, s.activities_sd) = detail::mean_sd(counts);
  s.unique_activities = tuples.size();
  s.unique_phases = phases.size();
  s.unique_verbs = used[0].size();
  s.unique_instruments = used[1].size();
  s.unique_structures = used[2].size();
  s.surgeons = surgeons.size();
  return s;
}

inline nlohmann::json to_json(const DatasetStats& s) {
  return {{"interventions", s.interventions},
          {"surgeons", s.surgeons},
          {"duration_min", {{"mean", s.duration_min_mean}, {"sd", s.duration_min_sd}}},
          {"activities_per_intervention", {{"mean", s.activities_mean}, {"sd", s.activities_sd}}},
          {"unique_activities", s.unique_activities},
          {"unique_phases", s.unique_phases},
          {"unique_verbs", s.unique_verbs},
          {"unique_instruments", s.unique_instruments},
          {"unique_structures", s.unique_structures}};
}

}  // namespace surglab
