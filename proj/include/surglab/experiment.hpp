// Experiment configuration and orchestration: dataset resolution, model
// training or reuse per fold and run, test-input perturbation and scoring.
#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "surglab/annotation_io.hpp"
#include "surglab/corruption.hpp"
#include "surglab/evaluation.hpp"
#include "surglab/pipeline.hpp"
#include "surglab/rng.hpp"
#include "surglab/synthgen.hpp"
#include "surglab/types.hpp"

namespace surglab {

enum class ExperimentKind { OneElement, TwoElement, Duration, Noise, Delay };

inline std::string_view experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::OneElement: return "E1_one_element";
    case ExperimentKind::TwoElement: return "E2_two_element";
    case ExperimentKind::Duration: return "E3_duration";
    case ExperimentKind::Noise: return "E4_noise";
    case ExperimentKind::Delay: return "E5_delay";
  }
  return "?";
}

/// Accepts the full name or its "E<n>" prefix.
inline ExperimentKind parse_experiment_kind(std::string_view s) {
  for (auto k : {ExperimentKind::OneElement, ExperimentKind::TwoElement, ExperimentKind::Duration,
                 ExperimentKind::Noise, ExperimentKind::Delay}) {
    const auto name = experiment_name(k);
    if (s == name || s == name.substr(0, 2)) return k;
  }
  throw ValidationError("unknown experiment '" + std::string(s) + "'");
}

inline const std::vector<double>& default_noise_rates() {
  static const std::vector<double> r = {0.05, 0.10, 0.15, 0.20, 0.25, 0.50, 0.75};
  return r;
}

inline const std::vector<double>& default_delays() {
  static const std::vector<double> d = {1, 5, 10, 15, 20, 25, 30};
  return d;
}

/// One noise kind swept over several rates, each simulated `repetitions` times.
struct NoiseSweep {
  NoiseKind kind = NoiseKind::Uniform;
  std::vector<double> rates;
  std::size_t repetitions = 5;
};

struct ModelStore {
  std::string reuse_dir;         // load artifacts from here when set
  bool inline_training = false;  // train when an artifact is missing from reuse_dir
  std::string save_dir;          // write every model used here when set
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::TwoElement;
  std::string dataset = "LDH.R";  // preset name or manifest path
  nlohmann::json generator = nlohmann::json::object();
  std::vector<std::string> configurations;
  std::optional<std::size_t> window_n;
  ModelConfig model;
  std::vector<NoiseSweep> noise;
  std::vector<DelaySpec> delay;
  std::size_t runs_per_fold = 3;
  std::uint64_t seed = 1;
  std::string output_dir = "results";
  std::optional<bool> with_duration;
  ModelStore models;
  std::optional<std::size_t> max_folds;
  bool vis_baseline = true;  // E4/E5: "VIS" is scored without a model
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ValidationError("unknown key '" + key + "' in " + where);
}

template <typename T>
T get_as(const nlohmann::json& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("invalid value for '" + what + "': " + j.dump());
  }
}

inline std::size_t get_count(const nlohmann::json& j, const std::string& what) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0)
    throw ValidationError("'" + what + "' must be a non-negative integer");
  return j.get<std::size_t>();
}

inline bool is_preset(std::string_view name) {
  const auto& names = preset_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

}  // namespace detail

inline void apply_model_overrides(ModelConfig& m, const nlohmann::json& j) {
  detail::check_keys(j, {"layers", "hidden", "dropout_rate", "epochs", "learning_rate", "batch_size"}, "model");
  if (j.contains("layers")) m.layers = detail::get_count(j["layers"], "model.layers");
  if (j.contains("hidden")) m.hidden = detail::get_count(j["hidden"], "model.hidden");
  if (j.contains("dropout_rate")) m.dropout_rate = detail::get_as<double>(j["dropout_rate"], "model.dropout_rate");
  if (j.contains("epochs")) m.epochs = detail::get_count(j["epochs"], "model.epochs");
  if (j.contains("learning_rate")) m.learning_rate = detail::get_as<double>(j["learning_rate"], "model.learning_rate");
  if (j.contains("batch_size")) m.batch_size = detail::get_count(j["batch_size"], "model.batch_size");
}

inline void apply_generator_overrides(GeneratorSpec& s, const nlohmann::json& j) {
  detail::check_keys(j,
                     {"seed", "n_interventions", "n_phases", "activities_mean", "activities_sd", "n_verbs",
                      "n_instruments", "n_structures", "coupling", "duration_log_mean", "duration_log_sd",
                      "duration_label_effect", "verb_instrument_affinity", "instruments_per_structure",
                      "instrument_persistence", "instrument_weight_skew", "left_structure_sharing",
                      "distinct_candidate_verbs", "left_instrument_focus", "n_surgeons"},
                     "generator");
  auto count = [&](const char* key, std::size_t& field) {
    if (j.contains(key)) field = detail::get_count(j[key], std::string("generator.") + key);
  };
  auto real = [&](const char* key, double& field) {
    if (j.contains(key)) field = detail::get_as<double>(j[key], std::string("generator.") + key);
  };
  if (j.contains("seed")) s.seed = detail::get_as<std::uint64_t>(j["seed"], "generator.seed");
  count("n_interventions", s.n_interventions);
  count("n_phases", s.n_phases);
  count("n_verbs", s.n_verbs);
  count("n_instruments", s.n_instruments);
  count("n_structures", s.n_structures);
  count("n_surgeons", s.n_surgeons);
  real("activities_mean", s.activities_mean);
  real("activities_sd", s.activities_sd);
  real("duration_log_mean", s.duration_log_mean);
  real("duration_log_sd", s.duration_log_sd);
  real("duration_label_effect", s.duration_label_effect);
  real("verb_instrument_affinity", s.verb_instrument_affinity);
  real("instruments_per_structure", s.instruments_per_structure);
  real("instrument_persistence", s.instrument_persistence);
  real("instrument_weight_skew", s.instrument_weight_skew);
  real("left_structure_sharing", s.left_structure_sharing);
  real("distinct_candidate_verbs", s.distinct_candidate_verbs);
  real("left_instrument_focus", s.left_instrument_focus);
  if (j.contains("coupling")) {
    const auto& c = j["coupling"];
    detail::check_keys(c, {"verb", "instrument", "structure"}, "generator.coupling");
    if (c.contains("verb")) s.coupling.verb = detail::get_as<double>(c["verb"], "generator.coupling.verb");
    if (c.contains("instrument"))
      s.coupling.instrument = detail::get_as<double>(c["instrument"], "generator.coupling.instrument");
    if (c.contains("structure"))
      s.coupling.structure = detail::get_as<double>(c["structure"], "generator.coupling.structure");
  }
  s.validate();
}

/// Generator settings for a preset under a top-level seed. The generator
/// seed derives from the top-level seed unless the overrides pin it.
inline GeneratorSpec preset_spec(std::string_view name, std::uint64_t seed,
                                 const nlohmann::json& overrides = nlohmann::json::object()) {
  auto spec = preset(name);
  spec.seed = derive_seed(seed, {tag("generate"), tag(name)});
  apply_generator_overrides(spec, overrides);
  return spec;
}

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"experiment", "dataset", "generator", "configurations", "window_n", "model", "noise", "delay",
                      "runs_per_fold", "seed", "output_dir", "with_duration", "models", "max_folds", "vis_baseline"},
                     "experiment config");
  ExperimentConfig c;
  if (!j.contains("experiment")) throw ValidationError("experiment config: 'experiment' is required");
  c.experiment = parse_experiment_kind(detail::get_as<std::string>(j["experiment"], "experiment"));
  if (j.contains("dataset")) c.dataset = detail::get_as<std::string>(j["dataset"], "dataset");
  if (j.contains("generator")) c.generator = j["generator"];
  if (j.contains("configurations"))
    c.configurations = detail::get_as<std::vector<std::string>>(j["configurations"], "configurations");
  if (j.contains("window_n")) c.window_n = detail::get_count(j["window_n"], "window_n");
  if (j.contains("model")) apply_model_overrides(c.model, j["model"]);
  if (j.contains("noise")) {
    if (!j["noise"].is_array()) throw ValidationError("'noise' must be a list");
    for (const auto& e : j["noise"]) {
      detail::check_keys(e, {"kind", "rate", "rates", "repetitions"}, "noise entry");
      NoiseSweep s;
      s.kind = parse_noise_kind(detail::get_as<std::string>(e.at("kind"), "noise.kind"));
      if (e.contains("rate")) s.rates.push_back(detail::get_as<double>(e["rate"], "noise.rate"));
      if (e.contains("rates")) {
        auto more = detail::get_as<std::vector<double>>(e["rates"], "noise.rates");
        s.rates.insert(s.rates.end(), more.begin(), more.end());
      }
      if (e.contains("repetitions")) s.repetitions = detail::get_count(e["repetitions"], "noise.repetitions");
      c.noise.push_back(std::move(s));
    }
  }
  if (j.contains("delay")) {
    if (!j["delay"].is_array()) throw ValidationError("'delay' must be a list");
    for (const auto& e : j["delay"]) {
      DelaySpec d;
      if (e.is_number()) {
        d.delay_s = e.get<double>();
      } else {
        detail::check_keys(e, {"delay_s", "per_position"}, "delay entry");
        d.delay_s = detail::get_as<double>(e.at("delay_s"), "delay.delay_s");
        if (e.contains("per_position"))
          d.per_position = detail::get_as<std::array<double, kPositions>>(e["per_position"], "delay.per_position");
      }
      c.delay.push_back(d);
    }
  }
  if (j.contains("runs_per_fold")) c.runs_per_fold = detail::get_count(j["runs_per_fold"], "runs_per_fold");
  if (j.contains("seed")) c.seed = detail::get_as<std::uint64_t>(j["seed"], "seed");
  if (j.contains("output_dir")) c.output_dir = detail::get_as<std::string>(j["output_dir"], "output_dir");
  if (j.contains("with_duration")) c.with_duration = detail::get_as<bool>(j["with_duration"], "with_duration");
  if (j.contains("models")) {
    const auto& m = j["models"];
    detail::check_keys(m, {"reuse_dir", "inline_training", "save_dir"}, "models");
    if (m.contains("reuse_dir")) c.models.reuse_dir = detail::get_as<std::string>(m["reuse_dir"], "models.reuse_dir");
    if (m.contains("inline_training"))
      c.models.inline_training = detail::get_as<bool>(m["inline_training"], "models.inline_training");
    if (m.contains("save_dir")) c.models.save_dir = detail::get_as<std::string>(m["save_dir"], "models.save_dir");
  }
  if (j.contains("max_folds")) c.max_folds = detail::get_count(j["max_folds"], "max_folds");
  if (j.contains("vis_baseline")) c.vis_baseline = detail::get_as<bool>(j["vis_baseline"], "vis_baseline");
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return parse_experiment_config(j);
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["experiment"] = experiment_name(c.experiment);
  j["dataset"] = c.dataset;
  if (!c.generator.empty()) j["generator"] = c.generator;
  j["configurations"] = c.configurations;
  if (c.window_n) j["window_n"] = *c.window_n;
  j["model"] = {{"layers", c.model.layers},       {"hidden", c.model.hidden},
                {"dropout_rate", c.model.dropout_rate}, {"epochs", c.model.epochs},
                {"learning_rate", c.model.learning_rate}, {"batch_size", c.model.batch_size}};
  if (!c.noise.empty()) {
    j["noise"] = nlohmann::json::array();
    for (const auto& s : c.noise)
      j["noise"].push_back({{"kind", noise_kind_name(s.kind)}, {"rates", s.rates}, {"repetitions", s.repetitions}});
  }
  if (!c.delay.empty()) {
    j["delay"] = nlohmann::json::array();
    for (const auto& d : c.delay) {
      nlohmann::json e = {{"delay_s", d.delay_s}};
      if (d.per_position) e["per_position"] = *d.per_position;
      j["delay"].push_back(e);
    }
  }
  j["runs_per_fold"] = c.runs_per_fold;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  if (c.with_duration) j["with_duration"] = *c.with_duration;
  j["models"] = {{"reuse_dir", c.models.reuse_dir},
                 {"inline_training", c.models.inline_training},
                 {"save_dir", c.models.save_dir}};
  if (c.max_folds) j["max_folds"] = *c.max_folds;
  j["vis_baseline"] = c.vis_baseline;
  return j;
}

/// Temporal context per procedure family; noise and delay runs use 5.
inline std::size_t default_window(ExperimentKind k, std::string_view dataset_name) {
  if (k == ExperimentKind::Noise || k == ExperimentKind::Delay) return 5;
  if (dataset_name.starts_with("ACDF")) return 50;
  if (dataset_name.starts_with("LDH") || dataset_name.starts_with("PA")) return 20;
  return 5;
}

inline bool uses_baseline(const ExperimentConfig& c) {
  return c.vis_baseline && (c.experiment == ExperimentKind::Noise || c.experiment == ExperimentKind::Delay);
}

/// Fills every optional field with the experiment's default and normalises
/// configuration names. Noise and delay lists always start at 0.
inline ExperimentConfig with_defaults(ExperimentConfig c, std::string_view dataset_name) {
  if (c.configurations.empty()) {
    switch (c.experiment) {
      case ExperimentKind::OneElement: c.configurations = {"V", "I", "S"}; break;
      case ExperimentKind::TwoElement: c.configurations = {"VI", "VS", "IS"}; break;
      case ExperimentKind::Duration: c.configurations = {"V", "I", "S", "VI", "VS", "IS"}; break;
      case ExperimentKind::Noise:
      case ExperimentKind::Delay: c.configurations = {"V", "I", "S", "VI", "VS", "IS", "VIS"}; break;
    }
  }
  std::set<std::string> seen;
  for (auto& name : c.configurations) {
    name = parse_mask(name).name();
    if (!seen.insert(name).second) throw ValidationError("configuration '" + name + "' listed twice");
  }
  if (!c.window_n) c.window_n = default_window(c.experiment, dataset_name);
  if (*c.window_n < 1) throw ValidationError("window_n must be >= 1");
  c.model.window_n = *c.window_n;
  if (!c.with_duration)
    c.with_duration = c.experiment == ExperimentKind::Duration || c.experiment == ExperimentKind::Delay;
  if (c.runs_per_fold < 1) throw ValidationError("runs_per_fold must be >= 1");
  if (c.max_folds && *c.max_folds < 1) throw ValidationError("max_folds must be >= 1");

  if (c.experiment == ExperimentKind::Noise) {
    if (c.noise.empty())
      for (auto kind : {NoiseKind::Uniform, NoiseKind::Frequency, NoiseKind::Pairwise, NoiseKind::NoSignal})
        c.noise.push_back({kind, default_noise_rates(), 5});
    std::set<NoiseKind> kinds;
    for (auto& s : c.noise) {
      if (!kinds.insert(s.kind).second)
        throw ValidationError("noise kind '" + std::string(noise_kind_name(s.kind)) + "' listed twice");
      if (s.rates.empty()) s.rates = default_noise_rates();
      s.rates.push_back(0.0);
      std::sort(s.rates.begin(), s.rates.end());
      s.rates.erase(std::unique(s.rates.begin(), s.rates.end()), s.rates.end());
      NoiseSpec{s.kind, s.rates.back(), s.repetitions, 0}.validate();
      NoiseSpec{s.kind, s.rates.front(), s.repetitions, 0}.validate();
    }
  } else if (!c.noise.empty()) {
    throw ValidationError("'noise' applies to E4_noise only");
  }

  if (c.experiment == ExperimentKind::Delay) {
    if (c.delay.empty())
      for (double d : default_delays()) c.delay.push_back({d, std::nullopt});
    if (std::none_of(c.delay.begin(), c.delay.end(), [](const DelaySpec& d) { return d.delay_s == 0.0 && !d.per_position; }))
      c.delay.push_back({0.0, std::nullopt});
    std::stable_sort(c.delay.begin(), c.delay.end(),
                     [](const DelaySpec& a, const DelaySpec& b) { return a.delay_s < b.delay_s; });
    for (std::size_t i = 0; i < c.delay.size(); ++i) {
      c.delay[i].validate();
      if (i > 0 && c.delay[i].delay_s == c.delay[i - 1].delay_s)
        throw ValidationError("delay " + format_number(c.delay[i].delay_s) + " s listed twice");
    }
  } else if (!c.delay.empty()) {
    throw ValidationError("'delay' applies to E5_delay only");
  }
  return c;
}

/// The experiment's dataset: a generated preset or a manifest on disk.
inline Dataset resolve_dataset(const ExperimentConfig& c) {
  if (detail::is_preset(c.dataset)) return generate_dataset(preset_spec(c.dataset, c.seed, c.generator));
  if (!c.generator.empty()) throw ValidationError("'generator' overrides apply to preset datasets only");
  if (!std::filesystem::exists(c.dataset))
    throw ValidationError("dataset '" + c.dataset + "' is neither a preset nor an existing manifest");
  return load_dataset(c.dataset);
}

/// Training seed; independent of the experiment so every experiment that
/// needs the same model trains the same one.
inline std::uint64_t training_seed(std::uint64_t seed, std::string_view dataset, const MaskConfig& mask,
                                   bool with_duration, std::string_view fold, std::size_t run) {
  return derive_seed(seed, {tag("train"), tag(dataset), tag(mask.pattern()), with_duration ? 1u : 0u, tag(fold), run});
}

/// Noise seed; shared by every configuration so all see the same corruption.
inline std::uint64_t noise_seed(std::uint64_t seed, NoiseKind kind, double rate, std::string_view fold,
                                std::size_t sim) {
  return derive_seed(seed, {tag("noise"), tag(noise_kind_name(kind)), std::bit_cast<std::uint64_t>(rate), tag(fold), sim});
}

inline std::filesystem::path model_artifact_path(const std::filesystem::path& dir, std::string_view dataset,
                                                 const MaskConfig& mask, bool with_duration, std::size_t window_n,
                                                 std::string_view fold, std::size_t run) {
  const std::string group =
      mask.name() + (with_duration ? "_duration" : "") + "_n" + std::to_string(window_n);
  return dir / std::string(dataset) / group / (std::string(fold) + "_run" + std::to_string(run) + ".model");
}

struct RunOptions {
  std::size_t workers = 1;
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

struct ExperimentReport {
  ExperimentConfig config;  // with defaults applied
  std::string dataset;
  std::vector<std::string> folds;
  std::vector<ResultRecord> records;  // sorted
  double seconds = 0.0;
};

namespace detail {

/// Runs f(0..n-1) on up to `workers` threads; the first exception stops
/// the remaining work and is rethrown.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      if (failed) return;
      const std::size_t i = next++;
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

inline void check_compatible(const TrainedModel& m, const ModelConfig& want, const MaskConfig& mask,
                             bool with_duration, const std::filesystem::path& path) {
  auto got = m.params.config;
  auto expected = want;
  expected.input_dim = got.input_dim;
  expected.n_classes = got.n_classes;
  if (!(got == expected) || !(m.mask == mask) || m.with_duration != with_duration)
    throw ValidationError("model artifact " + path.string() +
                          " was trained with different settings than this experiment requests");
}

}  // namespace detail

inline ExperimentReport run_experiment(const ExperimentConfig& raw, const Dataset& d, const RunOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = with_defaults(raw, d.name);
  const bool baseline = uses_baseline(c);
  const bool with_duration = *c.with_duration;
  const auto exp_name = std::string(experiment_name(c.experiment));

  auto folds = make_folds(d);
  if (c.max_folds && *c.max_folds < folds.size()) folds.resize(*c.max_folds);

  std::optional<FrequencyTable> freq;
  if (c.experiment == ExperimentKind::Noise) freq = build_frequency_table(d);

  struct Job {
    std::string config;
    std::size_t fold;
    std::size_t run;  // 0: model-free baseline
  };
  std::vector<Job> jobs;
  for (const auto& name : c.configurations)
    for (std::size_t f = 0; f < folds.size(); ++f) {
      if (baseline && name == "VIS") {
        jobs.push_back({name, f, 0});
        continue;
      }
      for (std::size_t r = 1; r <= c.runs_per_fold; ++r) jobs.push_back({name, f, r});
    }

  std::mutex log_mutex;
  std::size_t done = 0;
  std::vector<std::vector<ResultRecord>> results(jobs.size());

  auto obtain_model = [&](const Job& job, const MaskConfig& mask) {
    const auto& fold = folds[job.fold];
    if (!c.models.reuse_dir.empty()) {
      const auto path = model_artifact_path(c.models.reuse_dir, d.name, mask, with_duration, c.model.window_n,
                                            fold.test_id, job.run);
      if (std::filesystem::exists(path)) {
        auto m = load_model(path, d.vocab);
        detail::check_compatible(m, c.model, mask, with_duration, path);
        return m;
      }
      if (!c.models.inline_training)
        throw ValidationError("missing model artifact " + path.string() +
                              "; run the clean-data experiment (E1/E2, or E3 for duration models) with "
                              "models.save_dir set to this directory first, or set models.inline_training");
    }
    FoldTrainingSpec spec{c.model, mask, with_duration,
                          training_seed(c.seed, d.name, mask, with_duration, fold.test_id, job.run)};
    auto m = train_fold_model(d, fold.train_indices, spec, fold.test_id);
    return m;
  };

  auto run_job = [&](std::size_t index) {
    const auto& job = jobs[index];
    const auto& fold = folds[job.fold];
    const auto& test = d.interventions.at(fold.test_index);
    const auto mask = parse_mask(job.config);
    ResultRecord base;
    base.dataset = d.name;
    base.experiment = exp_name;
    base.config = job.config;
    base.fold = fold.test_id;
    base.run = job.run;
    auto& out = results[index];

    std::optional<TrainedModel> model;
    if (job.run > 0) {
      model = obtain_model(job, mask);
      if (!c.models.save_dir.empty())
        save_model(*model, d.vocab,
                   model_artifact_path(c.models.save_dir, d.name, mask, with_duration, c.model.window_n,
                                       fold.test_id, job.run));
      base.unseen_rate = model->unseen_rate(test.activities);
    }

    switch (c.experiment) {
      case ExperimentKind::OneElement:
      case ExperimentKind::TwoElement:
      case ExperimentKind::Duration: {
        auto r = base;
        r.accuracy = sequence_accuracy(model->predict(test.activities, d.vocab), test.activities);
        out.push_back(r);
        break;
      }
      case ExperimentKind::Noise:
        for (const auto& sweep : c.noise)
          for (double rate : sweep.rates) {
            const std::size_t sims = rate == 0.0 ? 1 : sweep.repetitions;
            for (std::size_t sim = 1; sim <= sims; ++sim) {
              const NoiseSpec spec{sweep.kind, rate, sweep.repetitions,
                                   noise_seed(c.seed, sweep.kind, rate, fold.test_id, sim)};
              const auto observed = corrupt(test.activities, spec, d.vocab, &*freq);
              auto r = base;
              r.noise_kind = std::string(noise_kind_name(sweep.kind));
              r.rate = rate;
              r.sim = sim;
              r.accuracy = model ? sequence_accuracy(model->predict(observed, d.vocab), test.activities)
                                 : vis_baseline(observed, test.activities);
              out.push_back(r);
            }
          }
        break;
      case ExperimentKind::Delay:
        for (const auto& delay : c.delay) {
          const auto observed = apply_delay(test, delay, mask);
          auto r = base;
          r.delay_s = delay.delay_s;
          if (model) {
            const auto labels = model->predict(observed, d.vocab);
            std::vector<ActivityTuple> timeline(observed.begin(), observed.end());
            for (std::size_t i = 0; i < timeline.size(); ++i) timeline[i].labels = labels[i];
            r.accuracy = duration_weighted_accuracy(timeline, test.activities);
          } else {
            r.accuracy = vis_baseline_timeline(observed, test.activities);
          }
          out.push_back(r);
        }
        break;
    }

    if (opt.log) {
      std::lock_guard lock(log_mutex);
      ++done;
      char line[256];
      std::snprintf(line, sizeof line, "[%zu/%zu] %s %s fold %s run %zu: accuracy %.4f", done, jobs.size(),
                    exp_name.c_str(), job.config.c_str(), fold.test_id.c_str(), job.run, out.front().accuracy);
      opt.log(line);
    }
  };

  detail::parallel_for(jobs.size(), opt.workers, run_job);

  ExperimentReport report;
  report.config = c;
  report.dataset = d.name;
  for (const auto& f : folds) report.folds.push_back(f.test_id);
  for (auto& v : results)
    for (auto& r : v) report.records.push_back(std::move(r));
  std::sort(report.records.begin(), report.records.end());
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& c, const RunOptions& opt = {}) {
  return run_experiment(c, resolve_dataset(c), opt);
}

}  // namespace surglab
