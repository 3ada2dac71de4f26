// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0
//
// sharpkit command-line front end.
//
// Exit codes: 0 success, 2 usage or config error, 3 runtime error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sharpkit/experiment.hpp"

namespace fs = std::filesystem;
using namespace sharpkit;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

fs::path output_root() {
  const char* env = std::getenv("SHARPKIT_OUT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, std::string out) {
  auto cfg = load_config(config_path);
  if (seed) cfg.seeds = {*seed};
  const fs::path dir = out.empty() ? output_root() / cfg.name : fs::path(out);
  for (auto s : cfg.seeds) {
    const auto run = run_training(cfg, s);
    const fs::path target = cfg.seeds.size() == 1 ? dir : dir / run.run_id;
    write_run(run, target);
    const auto& last = run.records.back();
    std::cout << run.run_id << ": epoch " << last.epoch << " test accuracy " << format_metric(last.accuracy)
              << " -> " << target.string() << '\n';
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& experiment, std::string out, std::size_t jobs,
              const std::vector<std::size_t>& batch_sizes) {
  const auto cfg = load_config(config_path);
  SweepOptions opts;
  opts.out_dir = out.empty() ? output_root() / (cfg.name + "-" + experiment) : fs::path(out);
  opts.jobs = jobs;
  if (!batch_sizes.empty()) opts.batch_sizes = batch_sizes;
  SweepResult result;
  if (experiment == "A") {
    result = experiment_A(cfg, opts);
  } else if (experiment == "B") {
    result = experiment_B(cfg, opts);
  } else {
    result = experiment_C(cfg, opts);
  }
  std::cout << "Experiment " << experiment << " (" << result.runs.size() << " runs) -> " << opts.out_dir.string()
            << "\n"
            << render_summary_table(result.aggregate);
  return 0;
}

Model load_model(const std::string& config_path, const std::string& checkpoint) {
  const auto cfg = resolve(load_config(config_path));
  Model model = make_model(cfg, cfg.seeds.front());
  load_checkpoint(model, checkpoint);
  return model;
}

struct SharpnessArgs {
  std::string checkpoint, config;
  std::optional<double> rho, eta;
  std::optional<std::size_t> probes;
  bool adaptive = false;
  std::uint64_t probe_seed = 0;
  std::string method = "combined";
};

int cmd_sharpness(const SharpnessArgs& a) {
  const auto cfg = resolve(load_config(a.config));
  Model model = load_model(a.config, a.checkpoint);
  const auto slice = make_datasets(cfg).train.head(cfg.sharpness.slice);
  SharpnessOptions opts;
  opts.adaptive = a.adaptive;
  opts.rho = a.rho.value_or(a.adaptive ? cfg.sharpness.adaptive_rho : cfg.sharpness.rho);
  opts.eta = a.eta.value_or(cfg.sharpness.eta);
  opts.probes = a.probes.value_or(cfg.sharpness.probes);
  opts.seed = a.probe_seed;
  opts.method = parse_probe_method(a.method);
  std::cout << estimate_sharpness(model, slice, opts).to_csv_line() << '\n';
  return 0;
}

int cmd_rescale(const std::string& config_path, const std::string& checkpoint, std::size_t layer, double alpha,
                const std::string& out) {
  const Model model = load_model(config_path, checkpoint);
  save_checkpoint(rectifier_rescale(model, layer, alpha), out);
  return 0;
}

int cmd_report(const std::string& dir, const std::string& format) {
  std::string experiment;
  const auto runs = load_experiment_dir(dir, &experiment);
  auto agg = aggregate(runs);
  agg.experiment = experiment;
  if (format == "csv") {
    write_curves_csv(agg, runs, std::cout);
  } else {
    std::cout << render_markdown(agg);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sharpkit: SGD, SAM and ASAM on small networks, with sharpness probes"};
  app.require_subcommand(1);

  std::string config, out, experiment = "A", checkpoint, dir, format = "md";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::vector<std::size_t> batch_sizes;

  auto* train = app.add_subcommand("train", "Train one run per seed");
  train->add_option("--config", config, "Experiment config (JSON)")->required();
  train->add_option("--seed", seed, "Run this seed instead of the config's seed list");
  train->add_option("--out", out, "Output directory");

  auto* sweep = app.add_subcommand("sweep", "Run experiment A, B or C");
  sweep->add_option("--config", config, "Base config (JSON)")->required();
  sweep->add_option("--experiment", experiment, "A, B or C")->required()->check(CLI::IsMember({"A", "B", "C"}));
  sweep->add_option("--out", out, "Output directory");
  sweep->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
  sweep->add_option("--batch-sizes", batch_sizes, "Batch sizes for experiment B");

  SharpnessArgs sa;
  auto* sharp = app.add_subcommand("sharpness", "Estimate sharpness of a checkpoint");
  sharp->add_option("--checkpoint", sa.checkpoint, "Checkpoint file")->required();
  sharp->add_option("--config", sa.config, "Config the checkpoint was trained with")->required();
  sharp->add_option("--rho", sa.rho, "Ball radius");
  sharp->add_flag("--adaptive", sa.adaptive, "Use the T_w-rescaled ball");
  sharp->add_option("--probes", sa.probes, "Random probes");
  sharp->add_option("--probe-seed", sa.probe_seed, "Seed for the random probes");
  sharp->add_option("--eta", sa.eta, "T_w stabiliser for --adaptive");
  sharp->add_option("--method", sa.method, "random_sphere, grad_ascent or combined")
      ->check(CLI::IsMember({"random_sphere", "grad_ascent", "combined"}));

  std::size_t layer = 0;
  double alpha = 1.0;
  auto* rescale = app.add_subcommand("rescale", "Write a function-preserving rectifier rescaling of a checkpoint");
  rescale->add_option("--checkpoint", checkpoint, "Input checkpoint")->required();
  rescale->add_option("--config", config, "Config the checkpoint was trained with")->required();
  rescale->add_option("--layer", layer, "Index of the first dense/conv layer of the pair")->required();
  rescale->add_option("--alpha", alpha, "Scale factor")->required();
  rescale->add_option("--out", out, "Output checkpoint")->required();

  auto* report = app.add_subcommand("report", "Summarise a sweep or run directory");
  report->add_option("--experiment-dir", dir, "Sweep or run directory")->required();
  report->add_option("--format", format, "csv or md")->check(CLI::IsMember({"csv", "md"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) return cmd_train(config, seed, out);
    if (*sweep) return cmd_sweep(config, experiment, out, jobs, batch_sizes);
    if (*sharp) return cmd_sharpness(sa);
    if (*rescale) return cmd_rescale(config, checkpoint, layer, alpha, out);
    if (*report) return cmd_report(dir, format);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
