// Report files for an experiment run (records, summary, plot data) and the
// paired comparison of two result sets.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "surglab/evaluation.hpp"
#include "surglab/experiment.hpp"
#include "surglab/statistics.hpp"

namespace surglab {

inline constexpr const char* kResultsHeader =
    "dataset,experiment,config,noise_kind,rate,delay_s,fold,run,sim,accuracy,unseen_rate";

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw ParseError(line_no, "unterminated quote");
  out.push_back(std::move(cur));
  return out;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ParseError(line_no, "bad number '" + s + "'");
  return v;
}

inline std::size_t parse_size(const std::string& s, std::size_t line_no) {
  const double v = parse_double(s, line_no);
  if (v < 0 || v != std::floor(v)) throw ParseError(line_no, "bad count '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

inline std::string results_csv(std::span<const ResultRecord> records) {
  std::ostringstream os;
  os << kResultsHeader << '\n';
  for (const auto& r : records) {
    os << detail::csv_field(r.dataset) << ',' << detail::csv_field(r.experiment) << ',' << detail::csv_field(r.config)
       << ',' << r.noise_kind << ',' << (r.rate ? format_number(*r.rate) : "") << ','
       << (r.delay_s ? format_number(*r.delay_s) : "") << ',' << detail::csv_field(r.fold) << ',' << r.run << ','
       << r.sim << ',' << format_number(r.accuracy) << ',' << format_number(r.unseen_rate) << '\n';
  }
  return os.str();
}

inline std::vector<ResultRecord> parse_results_csv(std::string_view content) {
  std::istringstream is{std::string(content)};
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader) throw ParseError(1, "results file has an unexpected header");
  std::vector<ResultRecord> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line, line_no);
    if (f.size() != 11) throw ParseError(line_no, "expected 11 fields");
    ResultRecord r;
    r.dataset = f[0];
    r.experiment = f[1];
    r.config = f[2];
    r.noise_kind = f[3];
    if (!f[4].empty()) r.rate = detail::parse_double(f[4], line_no);
    if (!f[5].empty()) r.delay_s = detail::parse_double(f[5], line_no);
    r.fold = f[6];
    r.run = detail::parse_size(f[7], line_no);
    r.sim = detail::parse_size(f[8], line_no);
    r.accuracy = detail::parse_double(f[9], line_no);
    r.unseen_rate = detail::parse_double(f[10], line_no);
    out.push_back(std::move(r));
  }
  return out;
}

/// Reads results.csv, or the results.csv inside a report directory.
inline std::vector<ResultRecord> load_results(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / "results.csv" : path;
  try {
    return parse_results_csv(detail::read_file(file));
  } catch (const ParseError& e) {
    throw Error(file.string() + ": " + e.what());
  }
}

/// Grouping used for the summary and plot data of each experiment.
inline std::vector<GroupKey> condition_keys(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Noise: return {GroupKey::NoiseKind, GroupKey::Config, GroupKey::Rate};
    case ExperimentKind::Delay: return {GroupKey::Config, GroupKey::Delay};
    default: return {GroupKey::Config};
  }
}

inline nlohmann::json summary_json(const ExperimentReport& rep) {
  nlohmann::json j;
  j["experiment"] = experiment_name(rep.config.experiment);
  j["dataset"] = rep.dataset;
  j["folds"] = rep.folds;
  j["records"] = rep.records.size();
  j["config"] = to_json(rep.config);
  const auto keys = condition_keys(rep.config.experiment);
  j["groups"] = nlohmann::json::array();
  for (const auto& row : aggregate(rep.records, keys)) {
    nlohmann::json g;
    for (std::size_t k = 0; k < keys.size(); ++k) g[group_key_name(keys[k])] = row.key[k];
    const auto& s = row.accuracy;
    g["count"] = s.count;
    g["mean"] = s.mean;
    g["sd"] = s.sd;
    g["min"] = s.min;
    g["q1"] = s.q1;
    g["median"] = s.median;
    g["q3"] = s.q3;
    g["max"] = s.max;
    g["unseen_rate"] = row.unseen_rate_mean;
    j["groups"].push_back(std::move(g));
  }
  return j;
}

/// Writes results.csv, summary.json and the plot-data tables; returns the
/// paths written.
inline std::vector<std::filesystem::path> write_report(const ExperimentReport& rep,
                                                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    detail::write_file(dir / name, content);
    written.push_back(dir / name);
  };
  emit("results.csv", results_csv(rep.records));
  emit("summary.json", summary_json(rep).dump(2) + "\n");

  const auto keys = condition_keys(rep.config.experiment);
  const auto rows = aggregate(rep.records, keys);
  std::ostringstream os;
  switch (rep.config.experiment) {
    case ExperimentKind::OneElement:
    case ExperimentKind::TwoElement:
    case ExperimentKind::Duration: {
      os << "config,mean,sd,count\n";
      for (const auto& r : rows)
        os << r.key[0] << ',' << format_number(r.accuracy.mean) << ',' << format_number(r.accuracy.sd) << ','
           << r.accuracy.count << '\n';
      emit("plot_element_accuracy.csv", os.str());
      os.str("");
      os << "config,min,q1,median,q3,max\n";
      for (const auto& r : rows)
        os << r.key[0] << ',' << format_number(r.accuracy.min) << ',' << format_number(r.accuracy.q1) << ','
           << format_number(r.accuracy.median) << ',' << format_number(r.accuracy.q3) << ','
           << format_number(r.accuracy.max) << '\n';
      emit("plot_config_boxplot.csv", os.str());
      break;
    }
    case ExperimentKind::Noise: {
      os << "noise_kind,config,rate,mean,sd\n";
      std::map<std::pair<std::string, std::string>, double> clean;
      for (const auto& r : rows) {
        os << r.key[0] << ',' << r.key[1] << ',' << r.key[2] << ',' << format_number(r.accuracy.mean) << ','
           << format_number(r.accuracy.sd) << '\n';
        if (detail::parse_double(r.key[2], 0) == 0.0) clean[{r.key[0], r.key[1]}] = r.accuracy.mean;
      }
      emit("plot_noise_accuracy.csv", os.str());
      os.str("");
      os << "noise_kind,config,rate,loss\n";
      for (const auto& r : rows)
        os << r.key[0] << ',' << r.key[1] << ',' << r.key[2] << ','
           << format_number(clean.at({r.key[0], r.key[1]}) - r.accuracy.mean) << '\n';
      emit("plot_noise_loss.csv", os.str());
      break;
    }
    case ExperimentKind::Delay: {
      os << "config,delay_s,mean,sd\n";
      for (const auto& r : rows)
        os << r.key[0] << ',' << r.key[1] << ',' << format_number(r.accuracy.mean) << ','
           << format_number(r.accuracy.sd) << '\n';
      emit("plot_delay_accuracy.csv", os.str());
      break;
    }
  }
  return written;
}

/// Restricts a comparison to one noise or delay condition.
struct CompareFilter {
  std::optional<std::string> noise_kind;
  std::optional<double> rate;
  std::optional<double> delay_s;
};

struct ComparisonRow {
  std::string config_a;
  std::string config_b;
  std::vector<std::string> folds;
  double mean_a = 0.0;  // mean of fold means
  double mean_b = 0.0;
  WilcoxonResult test;
};

/// Mean accuracy per fold for one configuration.
inline std::map<std::string, double> fold_means(std::span<const ResultRecord> records, const std::string& config,
                                                const CompareFilter& filter) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    if (r.config != config) continue;
    if (filter.noise_kind && r.noise_kind != *filter.noise_kind) continue;
    if (filter.rate && r.rate != filter.rate) continue;
    if (filter.delay_s && r.delay_s != filter.delay_s) continue;
    auto& [sum, n] = acc[r.fold];
    sum += r.accuracy;
    ++n;
  }
  std::map<std::string, double> out;
  for (const auto& [fold, v] : acc) out[fold] = v.first / static_cast<double>(v.second);
  return out;
}

inline std::vector<std::string> configs_in(std::span<const ResultRecord> records) {
  std::vector<std::string> out;
  for (const auto& r : records)
    if (std::find(out.begin(), out.end(), r.config) == out.end()) out.push_back(r.config);
  return out;
}

/// Paired signed-rank comparison of fold-level accuracies between two
/// result sets. With explicit configurations one pair is compared;
/// otherwise every configuration of `a` is paired with every configuration
/// of `b` (each unordered pair once when a and b are the same records).
inline std::vector<ComparisonRow> compare_results(std::span<const ResultRecord> a, std::span<const ResultRecord> b,
                                                  std::optional<std::string> config_a = std::nullopt,
                                                  std::optional<std::string> config_b = std::nullopt,
                                                  const CompareFilter& filter = {}) {
  if (a.empty() || b.empty()) throw ValidationError("compare: empty result set");
  std::vector<std::pair<std::string, std::string>> pairs;
  const auto ca = config_a ? std::vector<std::string>{*config_a} : configs_in(a);
  const auto cb = config_b ? std::vector<std::string>{*config_b} : configs_in(b);
  const bool same_set = a.data() == b.data() && a.size() == b.size();
  for (std::size_t i = 0; i < ca.size(); ++i)
    for (std::size_t j = 0; j < cb.size(); ++j) {
      if (same_set && !config_a && !config_b && ca[i] >= cb[j]) continue;
      pairs.emplace_back(ca[i], cb[j]);
    }
  if (pairs.empty()) pairs.emplace_back(ca.front(), cb.front());

  std::vector<ComparisonRow> out;
  for (const auto& [x, y] : pairs) {
    const auto fa = fold_means(a, x, filter);
    const auto fb = fold_means(b, y, filter);
    if (fa.empty()) throw ValidationError("compare: no records for configuration '" + x + "'");
    if (fb.empty()) throw ValidationError("compare: no records for configuration '" + y + "'");
    ComparisonRow row{x, y, {}, 0.0, 0.0, {}};
    std::vector<double> va, vb;
    for (const auto& [fold, v] : fa) {
      auto it = fb.find(fold);
      if (it == fb.end()) throw ValidationError("compare: fold '" + fold + "' is missing from the second report");
      row.folds.push_back(fold);
      va.push_back(v);
      vb.push_back(it->second);
    }
    if (fb.size() != fa.size()) throw ValidationError("compare: the reports have different folds");
    for (std::size_t k = 0; k < va.size(); ++k) {
      row.mean_a += va[k];
      row.mean_b += vb[k];
    }
    row.mean_a /= static_cast<double>(va.size());
    row.mean_b /= static_cast<double>(vb.size());
    row.test = wilcoxon_signed_rank(va, vb);
    out.push_back(std::move(row));
  }
  return out;
}

inline std::string comparison_csv(std::span<const ComparisonRow> rows) {
  std::ostringstream os;
  os << "config_a,config_b,folds,mean_a,mean_b,n,w_plus,w_minus,w,z,p,effect_size,exact\n";
  for (const auto& r : rows)
    os << r.config_a << ',' << r.config_b << ',' << r.folds.size() << ',' << format_number(r.mean_a) << ','
       << format_number(r.mean_b) << ',' << r.test.n << ',' << format_number(r.test.w_plus) << ','
       << format_number(r.test.w_minus) << ',' << format_number(r.test.w) << ',' << format_number(r.test.z) << ','
       << format_number(r.test.p) << ',' << format_number(r.test.effect_size) << ','
       << (r.test.exact ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace surglab
