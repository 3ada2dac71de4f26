// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sharpkit/experiment.hpp"

using namespace sharpkit;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny(const std::string& kind = "sgd") {
  ExperimentConfig c;
  c.name = "tiny";
  c.dataset.kind = "blobs";
  c.dataset.n_train = 60;
  c.dataset.n_test = 45;
  c.dataset.classes = 3;
  c.model.widths = {2, 8, 3};
  c.optimizer.kind = kind;
  c.optimizer.lr = 0.05;
  c.epochs = 3;
  c.batch_size = 16;
  c.seeds = {7};
  return c;
}

std::string csv_of(const std::vector<MetricsRecord>& records) {
  std::ostringstream out;
  write_metrics_csv(records, out);
  return out.str();
}

std::string config_error(const std::string& json) {
  try {
    parse_config(json);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sharpkit_test_experiment_" + name);
  fs::remove_all(dir);
  return dir;
}

RunData synthetic_run(const std::string& group, std::uint64_t seed, double test_acc) {
  RunData r;
  r.group = group;
  r.run_id = group + "-seed" + std::to_string(seed);
  r.config = resolve(tiny(group));
  r.config.epochs = 2;
  r.config.seeds = {seed};
  for (std::size_t e = 0; e <= 2; ++e) {
    for (Split s : {Split::train, Split::test}) {
      MetricsRecord m;
      m.run_id = r.run_id;
      m.seed = seed;
      m.epoch = e;
      m.split = s;
      m.loss = 1.0 / static_cast<double>(e + 1);
      m.accuracy = e == 2 && s == Split::test ? test_acc : 0.5;
      r.records.push_back(m);
    }
  }
  return r;
}

}  // namespace

TEST_CASE("config errors name the offending field") {
  CHECK(config_error(R"({"optimizer": {"lr": -1}})").rfind("optimizer.lr:", 0) == 0);
  CHECK(config_error(R"({"epochz": 3})").find("epochz") != std::string::npos);
  CHECK(config_error(R"({"model": {"widths": [2, 0, 3]}})").rfind("model.widths[1]:", 0) == 0);
  CHECK(config_error(R"({"dataset": {"kind": "mnist-ish"}})").rfind("dataset.kind:", 0) == 0);
  CHECK(config_error(R"({"seeds": []})").rfind("seeds:", 0) == 0);
  CHECK(config_error("{not json").find("invalid JSON") != std::string::npos);
  CHECK(config_error(R"({"epochs": 2})").empty());
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("resolve fills dependent defaults") {
  auto sam = parse_config(R"({"optimizer": {"kind": "sam"}})");
  CHECK_FALSE(sam.optimizer.rho.has_value());
  sam = resolve(sam);
  CHECK(*sam.optimizer.rho == kDefaultSamRho);
  CHECK(sam.label == "sam");
  const auto asam = resolve(parse_config(R"({"optimizer": {"kind": "asam"}})"));
  CHECK(*asam.optimizer.rho == kDefaultAsamRho);
  const auto sgd = resolve(parse_config("{}"));
  CHECK_FALSE(sgd.optimizer.rho.has_value());
  CHECK(make_optimizer_settings(sgd).rho == 0.0);
  // a resolved config survives a JSON round trip
  CHECK(to_json(resolve(parse_config(to_json(sam)))) == to_json(sam));
}

TEST_CASE("zero epochs records only the initial evaluation") {
  auto c = tiny();
  c.epochs = 0;
  const auto run = run_training(c, 7);
  REQUIRE(run.records.size() == 2);
  CHECK(run.records[0].epoch == 0);
  CHECK(run.records[1].epoch == 0);
  CHECK(run.grad_evals == 0);
}

TEST_CASE("metrics layout, determinism and budget accounting") {
  auto c = tiny("sam");
  c.sharpness.enabled = true;
  c.sharpness.probes = 4;
  const auto a = run_training(c, 7);
  const auto b = run_training(c, 7);
  CHECK(csv_of(a.records) == csv_of(b.records));
  CHECK(a.records.size() == 2 * (c.epochs + 1));
  CHECK(a.steps == c.epochs * 4);  // ceil(60 / 16)
  CHECK(a.grad_evals == 2 * a.steps);
  CHECK(a.records.back().grad_evals == a.grad_evals);
  for (const auto& r : a.records) {
    CHECK(r.sharpness.has_value() == (r.split == Split::train));
    CHECK_FALSE(r.wall_ms.has_value());
  }
  const auto other = run_training(c, 8);
  CHECK(csv_of(other.records) != csv_of(a.records));
  CHECK(csv_of(a.records).rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
}

TEST_CASE("sam with rho zero reproduces sgd losses") {
  auto sam = tiny("sam");
  sam.optimizer.rho = 0.0;
  sam.optimizer.momentum = 0.9;
  auto sgd = tiny("sgd");
  sgd.optimizer.momentum = 0.9;
  const auto a = run_training(sam, 3);
  const auto b = run_training(sgd, 3);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].loss == b.records[i].loss);
  CHECK(a.grad_evals == 2 * b.grad_evals);
}

TEST_CASE("metrics csv round trip and errors") {
  auto c = tiny();
  c.sharpness.enabled = true;
  c.sharpness.probes = 2;
  c.record_wall_time = true;
  const auto run = run_training(c, 7);
  std::istringstream in(csv_of(run.records));
  const auto back = read_metrics_csv(in);
  CHECK(csv_of(back) == csv_of(run.records));
  std::istringstream bad(std::string(kMetricsHeader) + "\nx,1,2\n");
  CHECK_THROWS_WITH_AS(read_metrics_csv(bad), doctest::Contains("line 2"), std::runtime_error);
  CHECK(format_metric(std::nullopt).empty());
  CHECK(format_metric(0.1) == "0.1");
}

TEST_CASE("incompatible model and data") {
  auto c = tiny();
  c.model.widths = {3, 8, 3};
  CHECK_THROWS_AS(run_training(c, 1), ConfigError);
  c.model.widths = {2, 8, 5};
  CHECK_THROWS_AS(run_training(c, 1), ConfigError);
}

TEST_CASE("mean and sample std") {
  const auto m = mean_std({0.7, 0.8, 0.9});
  CHECK(m.mean == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(*m.std == doctest::Approx(0.1).epsilon(1e-12));
  CHECK_FALSE(mean_std({0.5}).std.has_value());
}

TEST_CASE("aggregate over seeds") {
  std::vector<RunData> runs{synthetic_run("sgd", 20, 0.7), synthetic_run("sgd", 30, 0.8),
                            synthetic_run("sgd", 40, 0.9), synthetic_run("sam", 20, 0.85)};
  const auto agg = aggregate(runs);
  REQUIRE(agg.groups.size() == 2);
  const auto& sgd = *std::find_if(agg.groups.begin(), agg.groups.end(), [](auto& g) { return g.group == "sgd"; });
  CHECK(sgd.n == 3);
  CHECK(sgd.test_accuracy_mean == doctest::Approx(0.8));
  CHECK(*sgd.test_accuracy_std == doctest::Approx(0.1));
  CHECK(agg.runs.size() == 4);
  CHECK(agg.curves.size() == 2);
  CHECK(agg.curves[0].second.size() == 6);

  std::reverse(runs.begin(), runs.end());
  std::ostringstream a, b;
  write_aggregate_csv(agg, a);
  write_aggregate_csv(aggregate(runs), b);
  CHECK(a.str() == b.str());

  const auto single = aggregate({synthetic_run("sgd", 20, 0.7)});
  CHECK(single.single_seed);
  CHECK_FALSE(single.groups[0].test_accuracy_std.has_value());
  // budget view at floor(E/2) = 1
  CHECK(*single.runs[0].budget_test_accuracy == 0.5);
}

TEST_CASE("experiment plans") {
  auto base = tiny();
  base.seeds = {1, 2, 3};
  const auto a = plan_experiment_A(base);
  CHECK(a.size() == 6);
  const auto b = plan_experiment_B(base, {16, 32, 64});
  CHECK(b.size() == 18);
  CHECK(b[0].label.find("-bs") != std::string::npos);
  CHECK_THROWS_AS(plan_experiment_B(base, {}), ConfigError);
  const auto c = plan_experiment_C(base);
  CHECK(c.size() == 12);
  for (const auto& cfg : c) {
    CHECK(cfg.seeds.size() == 1);
    CHECK((cfg.optimizer.kind == "sam" || cfg.optimizer.kind == "asam"));
    // sgd base: the variant's own default rho is not overridden
    CHECK_FALSE(cfg.optimizer.rho.has_value());
  }

  auto sam_base = tiny("sam");
  sam_base.optimizer.rho = 0.2;
  for (const auto& cfg : plan_experiment_C(sam_base)) {
    if (cfg.optimizer.kind == "sam") CHECK(*cfg.optimizer.rho == 0.2);
    if (cfg.optimizer.kind == "asam") CHECK_FALSE(cfg.optimizer.rho.has_value());
  }
}

TEST_CASE("sweep B writes one directory per run and loads back") {
  auto base = tiny();
  base.epochs = 2;
  base.seeds = {1, 2, 3};
  SweepOptions opts;
  opts.out_dir = scratch("b");
  opts.jobs = 3;
  opts.batch_sizes = {16, 32, 64};
  const auto res = experiment_B(base, opts);
  CHECK(res.runs.size() == 18);
  CHECK(res.aggregate.groups.size() == 6);
  CHECK(res.aggregate.runs.size() == 18);
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(opts.out_dir)) {
    if (!e.is_directory()) continue;
    ++dirs;
    for (const char* f : {"metrics.csv", "resolved.config", "final.ckpt", "first_layer_hist.csv"})
      CHECK(fs::exists(e.path() / f));
  }
  CHECK(dirs == 18);
  for (const char* f : {"experiment.json", "aggregate.csv", "summary.csv", "summary.md"})
    CHECK(fs::exists(opts.out_dir / f));

  std::string experiment;
  const auto loaded = load_experiment_dir(opts.out_dir, &experiment);
  CHECK(experiment == "B");
  CHECK(loaded.size() == 18);
  std::ostringstream s1, s2;
  write_summary_csv(res.aggregate, s1);
  write_summary_csv(aggregate(loaded), s2);
  CHECK(s1.str() == s2.str());

  std::ostringstream curves;
  write_curves_csv(res.aggregate, res.runs, curves);
  const std::string text = curves.str();
  const auto lines = std::count(text.begin(), text.end(), '\n');
  CHECK(lines == 1 + 18 * 3);

  // parallel and serial sweeps agree
  SweepOptions serial = opts;
  serial.jobs = 1;
  serial.write_files = false;
  std::ostringstream s3;
  write_summary_csv(experiment_B(base, serial).aggregate, s3);
  CHECK(s3.str() == s1.str());
  fs::remove_all(opts.out_dir);
}

TEST_CASE("summary table shapes") {
  auto base = tiny();
  base.epochs = 2;
  base.seeds = {5};
  SweepOptions opts;
  opts.write_files = false;
  const auto a = experiment_A(base, opts);
  const auto table = render_summary_table(a.aggregate);
  CHECK(table.find("Testing accuracy (%)") != std::string::npos);
  CHECK(table.find("@ E/2") != std::string::npos);
  CHECK(render_markdown(a.aggregate).find("# Experiment A") != std::string::npos);

  base.model.widths = {2, 8, 3};
  const auto c = experiment_C(base, opts);
  CHECK(c.aggregate.groups.size() == 4);
  CHECK(render_summary_table(c.aggregate).find("kurtosis") != std::string::npos);
  for (const auto& r : c.aggregate.runs) CHECK(r.first_layer_kurtosis.has_value());
}

TEST_CASE("loading a directory without runs fails") {
  const auto dir = scratch("empty");
  fs::create_directories(dir);
  CHECK_THROWS_AS(load_experiment_dir(dir), ConfigError);
  CHECK_THROWS_AS(load_experiment_dir(dir / "missing"), ConfigError);
  fs::remove_all(dir);
}
