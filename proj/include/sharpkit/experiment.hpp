// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0
//
// Declarative, seeded training runs and the three comparison sweeps:
//   A: SAM vs SGD final test accuracy, with an equal-gradient-budget view.
//   B: SAM vs SGD across batch sizes, with cross-seed spread.
//   C: SAM vs ASAM with and without batch norm, plus first-layer weight
//      histograms.
//
// Configs are JSON. Every run directory holds metrics.csv, resolved.config
// (the config with all defaults expanded and a single seed) and final.ckpt.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sharpkit/data.hpp"
#include "sharpkit/model.hpp"
#include "sharpkit/optimizer.hpp"
#include "sharpkit/sharpness.hpp"

namespace sharpkit {

/// Invalid config; the message starts with the offending field path.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::string kind = "mlp";  // mlp | cnn
  std::vector<std::size_t> widths{2, 64, 64, 3};
  bool batchnorm = false;
  bool bias = true;
  std::size_t in_channels = 1;  // cnn
  std::size_t image_size = 8;   // cnn
  std::size_t num_classes = 4;  // cnn
};

struct DatasetConfig {
  std::string kind = "blobs";  // blobs | two_moons | spirals | strokes | idx | csv
  std::size_t n_train = 2000;
  std::size_t n_test = 2000;
  std::size_t classes = 3;
  double spread = 0.8;       // blobs
  double noise = 0.0;        // two_moons, spirals, strokes
  double turns = 1.5;        // spirals
  std::size_t image_size = 8;  // strokes
  std::uint64_t data_seed = 1;
  std::string normalization = "none";
  std::string train_images, train_labels, test_images, test_labels;  // idx
  std::string train_csv, test_csv;                                   // csv
};

struct OptimizerConfig {
  std::string kind = "sgd";
  std::optional<double> rho;  // defaults: sam 0.05, asam 0.5; unused by sgd
  double eta = kDefaultAsamEta;
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

struct ScheduleConfig {
  std::string kind = "constant";
  double min_lr = 0.0;
};

struct SharpnessConfig {
  bool enabled = false;
  double rho = kDefaultSamRho;
  double adaptive_rho = kDefaultAsamRho;
  double eta = 0.0;
  std::size_t probes = 64;
  std::size_t slice = 256;
  std::size_t every = 1;  // epochs between probes
};

struct ExperimentConfig {
  std::string name = "run";
  std::string label;  // group label; defaults to the optimizer kind
  ModelConfig model;
  DatasetConfig dataset;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  std::vector<std::uint64_t> seeds{20, 30, 40};
  SharpnessConfig sharpness;
  bool equal_budget = true;
  bool record_wall_time = false;
  std::size_t histogram_bins = 100;
};

/// Parses and validates; throws ConfigError naming the field path. Defaults
/// that depend on other fields (rho, label) stay unset until resolve().
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fills defaults (rho, label) and validates.
ExperimentConfig resolve(ExperimentConfig cfg);
void validate(const ExperimentConfig& cfg);
/// Pretty JSON with every field present.
std::string to_json(const ExperimentConfig& cfg);

DatasetPair make_datasets(const ExperimentConfig& cfg);
Model make_model(const ExperimentConfig& cfg, std::uint64_t seed);
OptimizerSettings make_optimizer_settings(const ExperimentConfig& cfg);

struct MetricsRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  Split split = Split::train;
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
  std::optional<double> sharpness;
  std::optional<double> adaptive_sharpness;
  std::size_t grad_evals = 0;
  std::optional<double> wall_ms;
};

inline constexpr const char* kMetricsHeader =
    "run_id,seed,epoch,split,loss,accuracy,lr,sharpness,adaptive_sharpness,grad_evals,wall_ms";

/// %.9g; empty for nullopt.
std::string format_metric(std::optional<double> v);
void write_metrics_csv(const std::vector<MetricsRecord>& records, std::ostream& out);
std::vector<MetricsRecord> read_metrics_csv(std::istream& in);

struct RunResult {
  std::string run_id;
  std::string label;
  std::uint64_t seed = 0;
  ExperimentConfig config;  // resolved, seeds = {seed}
  std::vector<MetricsRecord> records;
  Model model;
  std::size_t steps = 0;
  std::size_t grad_evals = 0;
};

/// Trains one seed. Epoch 0 is the evaluation of the initial model; after
/// each epoch both splits are evaluated in eval mode.
RunResult run_training(const ExperimentConfig& cfg, std::uint64_t seed);
/// Writes metrics.csv, resolved.config, final.ckpt into `dir`.
void write_run(const RunResult& run, const std::filesystem::path& dir);

/// Loss/accuracy of `model` on `data` in eval mode.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};
Evaluation evaluate(const Model& model, const Dataset& data);

struct CurvePoint {
  std::size_t epoch = 0;
  Split split = Split::train;
  std::size_t n = 0;
  double loss_mean = 0.0;
  std::optional<double> loss_std;  // absent when n == 1
  double accuracy_mean = 0.0;
  std::optional<double> accuracy_std;
};

struct GroupSummary {
  std::string group;
  std::size_t n = 0;
  double test_accuracy_mean = 0.0;
  std::optional<double> test_accuracy_std;
  double train_loss_mean = 0.0;
  std::optional<double> train_loss_std;
  std::optional<double> budget_test_accuracy_mean;  // at epoch E/2
  std::optional<double> kurtosis_mean;
};

struct RunSummary {
  std::string group;
  std::string run_id;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;
  bool batchnorm = false;
  std::size_t epochs = 0;
  double final_test_accuracy = 0.0;
  double final_train_loss = 0.0;
  std::optional<double> budget_test_accuracy;  // test accuracy at epoch E/2
  std::optional<double> first_layer_kurtosis;
};

struct AggregateResult {
  std::string experiment;  // A, B, C or empty
  std::vector<std::pair<std::string, std::vector<CurvePoint>>> curves;  // per group
  std::vector<GroupSummary> groups;
  std::vector<RunSummary> runs;
  bool single_seed = false;
};

/// Mean and sample standard deviation (n - 1); std is absent for n == 1.
struct MeanStd {
  double mean = 0.0;
  std::optional<double> std;
};
MeanStd mean_std(std::vector<double> values);

/// What aggregate() needs from a finished run.
struct RunData {
  std::string group;
  std::string run_id;
  ExperimentConfig config;
  std::vector<MetricsRecord> records;
  std::optional<double> first_layer_kurtosis;
};

RunData to_run_data(const RunResult& run);
/// Groups runs by label; within a group, runs are ordered by seed first so
/// the result does not depend on the order of `runs`.
AggregateResult aggregate(std::vector<RunData> runs);

void write_aggregate_csv(const AggregateResult& agg, std::ostream& out);
void write_summary_csv(const AggregateResult& agg, std::ostream& out);
/// Table with one row per (seed, method), shaped like the published tables.
std::string render_summary_table(const AggregateResult& agg);
std::string render_markdown(const AggregateResult& agg);
/// One row per (run, epoch) with run values and group mean/std.
void write_curves_csv(const AggregateResult& agg, const std::vector<RunData>& runs, std::ostream& out);

struct SweepOptions {
  std::filesystem::path out_dir;
  std::size_t jobs = 1;
  bool write_files = true;
  std::vector<std::size_t> batch_sizes{32, 64, 128};  // experiment B
};

struct SweepResult {
  AggregateResult aggregate;
  std::vector<RunData> runs;
};

/// Run configs for each experiment, one per (variant, seed).
std::vector<ExperimentConfig> plan_experiment_A(const ExperimentConfig& base);
std::vector<ExperimentConfig> plan_experiment_B(const ExperimentConfig& base, const std::vector<std::size_t>& batch_sizes);
std::vector<ExperimentConfig> plan_experiment_C(const ExperimentConfig& base);

SweepResult experiment_A(const ExperimentConfig& base, const SweepOptions& opts);
SweepResult experiment_B(const ExperimentConfig& base, const SweepOptions& opts);
SweepResult experiment_C(const ExperimentConfig& base, const SweepOptions& opts);
/// Runs every planned config (each with a single seed), possibly in parallel.
SweepResult run_sweep(const std::string& experiment, const std::vector<ExperimentConfig>& plan,
                      const ExperimentConfig& base, const SweepOptions& opts);

/// Reads every run subdirectory of a sweep (or a single run directory).
std::vector<RunData> load_experiment_dir(const std::filesystem::path& dir, std::string* experiment = nullptr);

/// Histogram CSV: bin_left,bin_right,count rows and a trailing
/// "# excess_kurtosis=<k>,n=<count>" metadata row.
void write_histogram_csv(const Histogram& h, std::ostream& out);

}  // namespace sharpkit
