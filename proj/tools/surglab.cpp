// surglab: generate datasets, run experiments, compare reports, print
// dataset statistics and check gradients.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "surglab/annotation_io.hpp"
#include "surglab/dataset_stats.hpp"
#include "surglab/experiment.hpp"
#include "surglab/lstm.hpp"
#include "surglab/report.hpp"
#include "surglab/synthgen.hpp"

using namespace surglab;

namespace {

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path + ": " + e.what());
  }
}

void print_summary(const ExperimentReport& rep) {
  const auto keys = condition_keys(rep.config.experiment);
  for (const auto& row : aggregate(rep.records, keys)) {
    std::string label;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      if (k) label += ' ';
      label += group_key_name(keys[k]) + "=" + row.key[k];
    }
    std::printf("%-44s mean %.4f  sd %.4f  n %zu\n", label.c_str(), row.accuracy.mean, row.accuracy.sd,
                row.accuracy.count);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surgical activity recognition experiments on synthetic or annotated workflows"};
  app.require_subcommand(1);

  std::string preset_name, config_path, out_dir, dataset_path;
  std::optional<std::uint64_t> seed;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  bool quiet = false;

  auto* generate = app.add_subcommand("generate", "Generate a synthetic dataset from a preset");
  generate->add_option("--preset", preset_name, "Preset name")->required();
  generate->add_option("--seed", seed, "Top-level seed (default 1)");
  generate->add_option("--config", config_path, "JSON file of generator overrides");
  generate->add_option("--out", out_dir, "Output directory")->required();

  auto* run = app.add_subcommand("run", "Run an experiment described by a config file");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, "Override the output directory");
  run->add_option("--preset", preset_name, "Override the dataset with a preset");
  run->add_option("--workers", workers, "Parallel jobs")->check(CLI::PositiveNumber);
  run->add_flag("--quiet", quiet, "No per-job progress");

  std::string report_a, report_b, config_a, config_b, noise_kind;
  std::optional<double> rate, delay;
  auto* compare = app.add_subcommand("compare", "Paired Wilcoxon signed-rank test of fold accuracies");
  compare->add_option("report_a", report_a, "results.csv or report directory")->required();
  compare->add_option("report_b", report_b, "results.csv or report directory")->required();
  compare->add_option("--config-a", config_a, "Configuration taken from report A");
  compare->add_option("--config-b", config_b, "Configuration taken from report B");
  compare->add_option("--noise-kind", noise_kind, "Only records of this noise kind");
  compare->add_option("--rate", rate, "Only records at this noise rate");
  compare->add_option("--delay", delay, "Only records at this delay");
  compare->add_option("--test", "Statistical test")->check(CLI::IsMember({"wilcoxon"}))->default_val("wilcoxon");
  compare->add_option("--out", out_dir, "Write the table to this file instead of stdout");

  auto* stats = app.add_subcommand("stats", "Dataset statistics as JSON");
  stats->add_option("--preset", preset_name, "Preset name");
  stats->add_option("--dataset", dataset_path, "Dataset manifest");
  stats->add_option("--seed", seed, "Top-level seed for presets (default 1)");
  stats->add_option("--out", out_dir, "Write the JSON to this file instead of stdout");

  ModelConfig gc;
  gc.layers = 2;
  gc.hidden = 8;
  gc.window_n = 5;
  gc.n_classes = 10;
  gc.input_dim = 12;
  gc.dropout_rate = 0.0;
  GradientCheckOptions gc_opt;
  double tolerance = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gradcheck->add_option("--layers", gc.layers)->capture_default_str();
  gradcheck->add_option("--hidden", gc.hidden)->capture_default_str();
  gradcheck->add_option("--window", gc.window_n)->capture_default_str();
  gradcheck->add_option("--classes", gc.n_classes)->capture_default_str();
  gradcheck->add_option("--input-dim", gc.input_dim)->capture_default_str();
  gradcheck->add_option("--samples", gc_opt.samples)->capture_default_str();
  gradcheck->add_option("--tolerance", tolerance)->capture_default_str();
  gradcheck->add_option("--seed", seed, "Initialisation seed (default 1)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      const auto overrides = config_path.empty() ? nlohmann::json::object() : read_json(config_path);
      const auto d = generate_dataset(preset_spec(preset_name, seed.value_or(1), overrides));
      const auto manifest = save_dataset(d, out_dir);
      std::cout << "wrote " << d.interventions.size() << " interventions to " << manifest.string() << "\n";
      std::cout << to_json(dataset_stats(d)).dump(2) << "\n";
    } else if (*run) {
      auto cfg = load_experiment_config(config_path);
      if (seed) cfg.seed = *seed;
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      if (!preset_name.empty()) cfg.dataset = preset_name;
      RunOptions opt;
      opt.workers = workers;
      if (!quiet) opt.log = [](const std::string& line) { std::cerr << line << "\n"; };
      const auto rep = run_experiment(cfg, opt);
      write_report(rep, rep.config.output_dir);
      print_summary(rep);
      std::fprintf(stderr, "%zu records in %.1f s; report in %s\n", rep.records.size(), rep.seconds,
                   rep.config.output_dir.c_str());
    } else if (*compare) {
      const auto a = load_results(report_a);
      const auto b = load_results(report_b);
      CompareFilter filter;
      if (!noise_kind.empty()) filter.noise_kind = std::string(noise_kind_name(parse_noise_kind(noise_kind)));
      filter.rate = rate;
      filter.delay_s = delay;
      auto opt_str = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<std::string>(s); };
      const auto rows = compare_results(a, b, opt_str(config_a), opt_str(config_b), filter);
      const auto table = comparison_csv(rows);
      if (out_dir.empty()) std::cout << table;
      else detail::write_file(out_dir, table);
    } else if (*stats) {
      if (preset_name.empty() == dataset_path.empty())
        throw ValidationError("stats needs exactly one of --preset or --dataset");
      const auto d = preset_name.empty() ? load_dataset(dataset_path)
                                         : generate_dataset(preset_spec(preset_name, seed.value_or(1)));
      const auto text = to_json(dataset_stats(d)).dump(2) + "\n";
      if (out_dir.empty()) std::cout << text;
      else detail::write_file(out_dir, text);
    } else if (*gradcheck) {
      gc.dropout_rate = 0.0;
      gc.validate();
      const auto rep = gradient_check_report(gc, seed.value_or(1), gc_opt);
      std::printf("max relative error %.3e over %zu parameters (%zu informative)\n", rep.max_relative_error,
                  rep.checked, rep.informative);
      if (!(rep.max_relative_error < tolerance)) {
        std::fprintf(stderr, "gradient check failed: %.3e >= %.1e\n", rep.max_relative_error, tolerance);
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
