// Cross-validation folds, accuracy metrics, result records and aggregation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "surglab/types.hpp"

namespace surglab {

struct Fold {
  std::size_t test_index = 0;  // into Dataset::interventions
  std::string test_id;
  std::vector<std::size_t> train_indices;
  std::vector<std::string> train_ids;
};

using FoldPlan = std::vector<Fold>;

/// Leave-one-intervention-out folds, ordered by intervention id.
inline FoldPlan make_folds(const Dataset& d) {
  if (d.interventions.size() < 2) throw ValidationError("make_folds: need at least 2 interventions");
  std::vector<std::size_t> order(d.interventions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return d.interventions[a].id < d.interventions[b].id; });
  for (std::size_t k = 1; k < order.size(); ++k)
    if (d.interventions[order[k]].id == d.interventions[order[k - 1]].id)
      throw ValidationError("make_folds: duplicate intervention id '" + d.interventions[order[k]].id + "'");
  FoldPlan plan;
  for (std::size_t test : order) {
    Fold f;
    f.test_index = test;
    f.test_id = d.interventions[test].id;
    for (std::size_t k : order)
      if (k != test) {
        f.train_indices.push_back(k);
        f.train_ids.push_back(d.interventions[k].id);
      }
    plan.push_back(std::move(f));
  }
  return plan;
}

/// Fraction of positions whose predicted tuple equals the truth on all six items.
inline double sequence_accuracy(std::span<const Labels> predicted, std::span<const ActivityTuple> truth) {
  if (predicted.size() != truth.size())
    throw ValidationError("sequence_accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                          std::to_string(truth.size()) + " activities");
  if (truth.empty()) throw ValidationError("sequence_accuracy: empty sequence");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i].labels ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace detail {

inline void check_timeline(std::span<const ActivityTuple> seq, const char* what) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (!(seq[i].t_end > seq[i].t_start))
      throw ValidationError(std::string(what) + ": segment " + std::to_string(i) + " has no duration");
    if (i > 0 && seq[i].t_start < seq[i - 1].t_end)
      throw ValidationError(std::string(what) + ": segments overlap or are unsorted at " + std::to_string(i));
  }
}

}  // namespace detail

/// Time where the predicted tuple equals the truth tuple, by exact interval
/// intersection, over the total truth activity duration. Both timelines are
/// sorted non-overlapping segment lists; gaps carry no tuple.
inline double duration_weighted_accuracy(std::span<const ActivityTuple> predicted,
                                         std::span<const ActivityTuple> truth) {
  detail::check_timeline(predicted, "predicted timeline");
  detail::check_timeline(truth, "truth timeline");
  double total = 0.0;
  for (const auto& t : truth) total += t.duration();
  if (!(total > 0.0)) throw ValidationError("duration_weighted_accuracy: zero total truth duration");
  double hit = 0.0;
  std::size_t i = 0, j = 0;
  while (i < predicted.size() && j < truth.size()) {
    const double lo = std::max(predicted[i].t_start, truth[j].t_start);
    const double hi = std::min(predicted[i].t_end, truth[j].t_end);
    if (hi > lo && predicted[i].labels == truth[j].labels) hit += hi - lo;
    if (predicted[i].t_end < truth[j].t_end) ++i;
    else ++j;
  }
  return hit / total;
}

/// Model-free baseline: the observed tuple is the prediction (aligned positions).
inline double vis_baseline(std::span<const ActivityTuple> observed, std::span<const ActivityTuple> truth) {
  if (observed.size() != truth.size()) throw ValidationError("vis_baseline: sequences are not aligned");
  std::vector<Labels> labels;
  labels.reserve(observed.size());
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (observed[i].t_start != truth[i].t_start || observed[i].t_end != truth[i].t_end)
      throw ValidationError("vis_baseline: timestamps differ at position " + std::to_string(i));
    labels.push_back(observed[i].labels);
  }
  return sequence_accuracy(labels, truth);
}

/// Model-free baseline on a resegmented (e.g. delayed) observed timeline.
inline double vis_baseline_timeline(std::span<const ActivityTuple> observed, std::span<const ActivityTuple> truth) {
  return duration_weighted_accuracy(observed, truth);
}

struct ResultRecord {
  std::string dataset;
  std::string experiment;
  std::string config;
  std::string noise_kind;  // empty when no noise applies
  std::optional<double> rate;
  std::optional<double> delay_s;
  std::string fold;  // test intervention id
  std::size_t run = 0;  // 1-based; 0 for model-free rows
  std::size_t sim = 0;  // 1-based noise simulation; 0 otherwise
  double accuracy = 0.0;
  double unseen_rate = 0.0;

  auto key() const { return std::tie(dataset, experiment, config, noise_kind, rate, delay_s, fold, run, sim); }
  bool operator<(const ResultRecord& o) const { return key() < o.key(); }
  bool operator==(const ResultRecord& o) const = default;
};

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample (n-1); 0 for a single value
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

/// Quantile by linear interpolation between order statistics (x sorted).
inline double quantile_sorted(std::span<const double> x, double p) {
  if (x.empty()) throw ValidationError("quantile of an empty sample");
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] + (h - static_cast<double>(lo)) * (x[lo + 1] - x[lo]);
}

inline Summary summarize(std::span<const double> values) {
  if (values.empty()) throw ValidationError("summarize: empty group");
  std::vector<double> x(values.begin(), values.end());
  std::sort(x.begin(), x.end());
  Summary s;
  s.count = x.size();
  for (double v : x) s.mean += v;
  s.mean /= static_cast<double>(x.size());
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
  }
  s.min = x.front();
  s.max = x.back();
  s.median = quantile_sorted(x, 0.5);
  s.q1 = quantile_sorted(x, 0.25);
  s.q3 = quantile_sorted(x, 0.75);
  return s;
}

enum class GroupKey { Dataset, Experiment, Config, NoiseKind, Rate, Delay, Fold, Run, Sim };

inline std::string group_key_name(GroupKey k) {
  switch (k) {
    case GroupKey::Dataset: return "dataset";
    case GroupKey::Experiment: return "experiment";
    case GroupKey::Config: return "config";
    case GroupKey::NoiseKind: return "noise_kind";
    case GroupKey::Rate: return "rate";
    case GroupKey::Delay: return "delay_s";
    case GroupKey::Fold: return "fold";
    case GroupKey::Run: return "run";
    case GroupKey::Sim: return "sim";
  }
  return "?";
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double v) {
  char buf[32];
  if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", v == 0.0 ? 0.0 : v);
    return buf;
  }
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string group_value(const ResultRecord& r, GroupKey k) {
  switch (k) {
    case GroupKey::Dataset: return r.dataset;
    case GroupKey::Experiment: return r.experiment;
    case GroupKey::Config: return r.config;
    case GroupKey::NoiseKind: return r.noise_kind;
    case GroupKey::Rate: return r.rate ? format_number(*r.rate) : "";
    case GroupKey::Delay: return r.delay_s ? format_number(*r.delay_s) : "";
    case GroupKey::Fold: return r.fold;
    case GroupKey::Run: return std::to_string(r.run);
    case GroupKey::Sim: return std::to_string(r.sim);
  }
  return "";
}

struct SummaryRow {
  std::vector<std::string> key;  // values in the order of the requested keys
  Summary accuracy;
  double unseen_rate_mean = 0.0;
};

/// Per-group accuracy statistics. Groups are ordered by the first record of
/// each group in key order, so the output is deterministic for sorted input.
inline std::vector<SummaryRow> aggregate(std::span<const ResultRecord> records, std::span<const GroupKey> keys) {
  if (records.empty()) throw ValidationError("aggregate: no records");
  std::vector<const ResultRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return *a < *b; });

  std::vector<std::vector<std::string>> order;
  std::map<std::vector<std::string>, std::pair<std::vector<double>, double>> groups;
  for (const auto* r : sorted) {
    std::vector<std::string> key;
    for (auto k : keys) key.push_back(group_value(*r, k));
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.first.push_back(r->accuracy);
    it->second.second += r->unseen_rate;
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    const auto& [values, unseen] = groups.at(key);
    out.push_back({key, summarize(values), unseen / static_cast<double>(values.size())});
  }
  return out;
}

}  // namespace surglab
