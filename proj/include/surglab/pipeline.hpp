// Per-fold training and prediction: joint activity classes, window
// construction, trained-model bundles and their on-disk artifact.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "surglab/encoding.hpp"
#include "surglab/lstm.hpp"
#include "surglab/types.hpp"

namespace surglab {

/// Unique full tuples of a training set; class k is the k-th smallest tuple.
class ClassTable {
 public:
  ClassTable() = default;
  explicit ClassTable(std::vector<Labels> tuples) : tuples_(std::move(tuples)) {
    std::sort(tuples_.begin(), tuples_.end());
    tuples_.erase(std::unique(tuples_.begin(), tuples_.end()), tuples_.end());
    for (std::size_t k = 0; k < tuples_.size(); ++k) index_.emplace(tuples_[k], k);
  }

  static ClassTable from(const Dataset& d, std::span<const std::size_t> interventions) {
    std::vector<Labels> all;
    for (auto k : interventions)
      for (const auto& a : d.interventions.at(k).activities) all.push_back(a.labels);
    return ClassTable(std::move(all));
  }

  std::size_t size() const { return tuples_.size(); }
  const Labels& tuple(std::size_t k) const { return tuples_.at(k); }
  const std::vector<Labels>& tuples() const { return tuples_; }
  bool contains(const Labels& t) const { return index_.count(t) != 0; }
  std::optional<std::size_t> find(const Labels& t) const {
    auto it = index_.find(t);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<Labels> tuples_;
  std::map<Labels, std::size_t> index_;
};

/// Windows for every position of a sequence.
inline std::vector<FeatureWindow> encode_sequence(std::span<const ActivityTuple> seq, std::size_t n,
                                                  const MaskConfig& m, const FeatureLayout& layout) {
  std::vector<FeatureWindow> out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) out.push_back(encode_window_sparse(seq, i, n, m, layout));
  return out;
}

/// A classifier trained for one mask on one fold, with everything needed
/// to encode new input and decode its predictions.
struct TrainedModel {
  ModelParams<float> params;
  ClassTable classes;
  MaskConfig mask;
  bool with_duration = false;
  std::string dataset;
  std::string fold;

  std::size_t window_n() const { return params.config.window_n; }

  std::vector<Labels> predict(std::span<const ActivityTuple> observed, const Vocabulary& vocab) const {
    if (observed.empty()) return {};
    const FeatureLayout layout(vocab, with_duration);
    if (layout.dim() != params.config.input_dim)
      throw ValidationError("model input size does not match the dataset vocabulary");
    const auto windows = encode_sequence(observed, window_n(), mask, layout);
    const auto cls = predict_classes(params, std::span<const FeatureWindow>(windows));
    std::vector<Labels> out;
    out.reserve(cls.size());
    for (auto c : cls) out.push_back(classes.tuple(c));
    return out;
  }

  /// Fraction of `truth` activities whose tuple is not a known class.
  double unseen_rate(std::span<const ActivityTuple> truth) const {
    if (truth.empty()) return 0.0;
    std::size_t unseen = 0;
    for (const auto& a : truth) unseen += classes.contains(a.labels) ? 0 : 1;
    return static_cast<double>(unseen) / static_cast<double>(truth.size());
  }
};

struct FoldTrainingSpec {
  ModelConfig model;  // input_dim and n_classes are filled in
  MaskConfig mask;
  bool with_duration = false;
  std::uint64_t seed = 0;
};

/// Trains on the clean sequences of `train` interventions. With the duration
/// feature, its standardisation uses the training activities' mean and sd.
inline TrainedModel train_fold_model(const Dataset& d, std::span<const std::size_t> training,
                                     const FoldTrainingSpec& spec, std::string fold_id = {},
                                     std::vector<double>* loss_history = nullptr) {
  if (training.empty()) throw ValidationError("train_fold_model: no training interventions");
  auto classes = ClassTable::from(d, training);
  if (classes.size() == 0) throw ValidationError("train_fold_model: training folds contain no activities");
  auto cfg = spec.model;
  cfg.input_dim = FeatureLayout(d.vocab, spec.with_duration).dim();
  cfg.n_classes = classes.size();
  TrainedModel tm{ModelParams<float>(cfg), std::move(classes), spec.mask, spec.with_duration, d.name,
                  std::move(fold_id)};

  const FeatureLayout layout(d.vocab, spec.with_duration);
  TrainingSet data;
  std::vector<double> durations;
  for (auto k : training) {
    const auto& acts = d.interventions.at(k).activities;
    auto windows = encode_sequence(acts, spec.model.window_n, spec.mask, layout);
    for (std::size_t i = 0; i < acts.size(); ++i) {
      data.inputs.push_back(std::move(windows[i]));
      data.targets.push_back(*tm.classes.find(acts[i].labels));
      durations.push_back(acts[i].duration());
    }
  }
  FeatureScaling scaling;
  if (spec.with_duration) {
    double mean = 0.0;
    for (double x : durations) mean += x;
    mean /= static_cast<double>(durations.size());
    double ss = 0.0;
    for (double x : durations) ss += (x - mean) * (x - mean);
    const double sd = durations.size() > 1 ? std::sqrt(ss / static_cast<double>(durations.size() - 1)) : 0.0;
    scaling = {static_cast<std::int64_t>(layout.duration_index()), mean, sd > 0.0 ? sd : 1.0};
  }
  tm.params = train<float>(tm.params.config, data, spec.seed, scaling, loss_history);
  return tm;
}

// Model artifact: "SURGLABM", u32 format version, u64 header length, JSON
// header, then values, Adam first and second moments as little-endian
// float64 arrays of the header's parameter count.
inline constexpr char kModelMagic[8] = {'S', 'U', 'R', 'G', 'L', 'A', 'B', 'M'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json vocab_json(const Vocabulary& v) {
  nlohmann::json j;
  for (auto kind : kAllKinds) {
    auto labels = v.labels(kind);
    j[std::string(kind_name(kind))] = std::vector<std::string>(labels.begin() + kFirstDataLabel, labels.end());
  }
  return j;
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw Error("model artifact is truncated");
  return v;
}

}  // namespace detail

inline void save_model(const TrainedModel& m, const Vocabulary& vocab, const std::filesystem::path& path) {
  const auto& cfg = m.params.config;
  nlohmann::json h;
  h["dataset"] = m.dataset;
  h["fold"] = m.fold;
  h["mask"] = m.mask.pattern();
  h["with_duration"] = m.with_duration;
  h["model"] = {{"layers", cfg.layers},         {"hidden", cfg.hidden},
                {"dropout_rate", cfg.dropout_rate}, {"epochs", cfg.epochs},
                {"learning_rate", cfg.learning_rate}, {"batch_size", cfg.batch_size},
                {"window_n", cfg.window_n},     {"input_dim", cfg.input_dim},
                {"n_classes", cfg.n_classes}};
  h["scaling"] = {{"index", m.params.scaling.index}, {"mean", m.params.scaling.mean}, {"sd", m.params.scaling.sd}};
  h["adam_step"] = m.params.adam_step;
  h["parameters"] = m.params.values.size();
  h["vocabulary"] = detail::vocab_json(vocab);
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& t : m.classes.tuples()) classes.push_back(std::vector<int>(t.begin(), t.end()));
  h["classes"] = classes;
  const std::string header = h.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write model artifact " + path.string());
  os.write(kModelMagic, sizeof kModelMagic);
  detail::write_pod(os, kModelFormatVersion);
  detail::write_pod(os, static_cast<std::uint64_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto* vec : {&m.params.values, &m.params.adam_m, &m.params.adam_v})
    for (float x : *vec) detail::write_pod(os, static_cast<double>(x));
  if (!os) throw Error("failed writing model artifact " + path.string());
}

/// Loads an artifact; the dataset vocabulary must match the one it was
/// trained with.
inline TrainedModel load_model(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open model artifact " + path.string());
  char magic[sizeof kModelMagic];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kModelMagic, sizeof magic) != 0)
    throw Error(path.string() + " is not a model artifact");
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != kModelFormatVersion)
    throw Error("unsupported model artifact version " + std::to_string(version));
  const auto len = detail::read_pod<std::uint64_t>(is);
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  if (!is) throw Error("model artifact is truncated");
  const auto h = nlohmann::json::parse(header);
  if (h.at("vocabulary") != detail::vocab_json(vocab))
    throw ValidationError("model artifact " + path.string() + " was trained on a different vocabulary");

  ModelConfig cfg;
  const auto& mj = h.at("model");
  cfg.layers = mj.at("layers");
  cfg.hidden = mj.at("hidden");
  cfg.dropout_rate = mj.at("dropout_rate");
  cfg.epochs = mj.at("epochs");
  cfg.learning_rate = mj.at("learning_rate");
  cfg.batch_size = mj.at("batch_size");
  cfg.window_n = mj.at("window_n");
  cfg.input_dim = mj.at("input_dim");
  cfg.n_classes = mj.at("n_classes");

  std::vector<Labels> tuples;
  for (const auto& c : h.at("classes")) {
    Labels t{};
    for (std::size_t p = 0; p < kPositions; ++p) t[p] = c.at(p).get<LabelId>();
    tuples.push_back(t);
  }
  TrainedModel m{ModelParams<float>(cfg), ClassTable(std::move(tuples)), parse_mask(h.at("mask").get<std::string>()),
                 h.at("with_duration").get<bool>(), h.at("dataset").get<std::string>(),
                 h.at("fold").get<std::string>()};
  if (h.at("parameters").get<std::size_t>() != m.params.values.size() || m.classes.size() != cfg.n_classes)
    throw ValidationError("model artifact " + path.string() + " is inconsistent");
  m.params.scaling = {h.at("scaling").at("index"), h.at("scaling").at("mean"), h.at("scaling").at("sd")};
  m.params.adam_step = h.at("adam_step");
  for (auto* vec : {&m.params.values, &m.params.adam_m, &m.params.adam_v})
    for (auto& x : *vec) x = static_cast<float>(detail::read_pod<double>(is));
  return m;
}

}  // namespace surglab
