// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0

#include "sharpkit/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "sharpkit/random.hpp"

namespace sharpkit {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kEvalChunk = 256;

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Dataset generate(const DatasetConfig& d, std::size_t n, std::uint64_t seed) {
  if (d.kind == "blobs") return gen_gaussian_blobs(n, d.classes, d.spread, seed);
  if (d.kind == "two_moons") return gen_two_moons(n, d.noise, seed);
  if (d.kind == "spirals") return gen_spirals(n, d.turns, d.noise, seed);
  return gen_stroke_images(n, d.classes, d.image_size, d.noise, seed);
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

Tensor batch_input(const Dataset& data, std::span<const std::size_t> idx, const Shape& input_shape) {
  Shape shape{idx.size()};
  shape.insert(shape.end(), input_shape.begin(), input_shape.end());
  return data.gather(idx).reshaped(shape);
}

void check_compatible(const Model& model, const Dataset& data) {
  if (shape_numel(model.input_shape()) != data.feature_count()) {
    throw ConfigError("model: expects inputs of shape " + shape_to_string(model.input_shape()) +
                      " but the dataset has samples of shape " + shape_to_string(data.sample_shape));
  }
  if (model.num_classes() != data.num_classes) {
    throw ConfigError("model: produces " + std::to_string(model.num_classes()) + " logits but the dataset has " +
                      std::to_string(data.num_classes) + " classes");
  }
}

std::string run_id_for(const std::string& label, std::uint64_t seed) {
  return label + "-seed" + std::to_string(seed);
}

}  // namespace

DatasetPair make_datasets(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  const auto mode = parse_normalization(d.normalization);
  DatasetPair pair;
  if (d.kind == "idx") {
    // Pixels are divided by 255 at load time; other modes start from raw bytes.
    const auto load_mode = mode == Normalization::scale_to_unit ? Normalization::scale_to_unit : Normalization::none;
    pair.train = load_idx(d.train_images, d.train_labels, load_mode);
    pair.test = load_idx(d.test_images, d.test_labels, load_mode);
    pair.test.split = Split::test;
    if (mode == Normalization::per_feature_standardize) pair = normalize(pair, mode);
    return pair;
  }
  if (d.kind == "csv") {
    pair.train = load_csv(d.train_csv);
    pair.test = load_csv(d.test_csv);
  } else {
    pair.train = generate(d, d.n_train, d.data_seed);
    pair.test = generate(d, d.n_test, splitmix64(d.data_seed ^ static_cast<std::uint64_t>(Stream::test_data)));
  }
  pair.train.split = Split::train;
  pair.test.split = Split::test;
  pair.test.num_classes = std::max(pair.test.num_classes, pair.train.num_classes);
  return normalize(pair, mode);
}

Model make_model(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto& m = cfg.model;
  const std::uint64_t init_seed = Rng::derive(seed, Stream::init).next_u64();
  if (m.kind == "cnn") return build_small_cnn(m.in_channels, m.num_classes, m.batchnorm, init_seed, m.image_size);
  return build_mlp(m.widths, m.batchnorm, init_seed, m.bias);
}

OptimizerSettings make_optimizer_settings(const ExperimentConfig& cfg) {
  OptimizerSettings s;
  s.kind = parse_optimizer_kind(cfg.optimizer.kind);
  s.rho = s.kind == OptimizerKind::sgd ? 0.0 : cfg.optimizer.rho.value_or(
                                                   s.kind == OptimizerKind::sam ? kDefaultSamRho : kDefaultAsamRho);
  s.eta = cfg.optimizer.eta;
  s.base.learning_rate = cfg.optimizer.lr;
  s.base.momentum = cfg.optimizer.momentum;
  s.base.weight_decay = cfg.optimizer.weight_decay;
  return s;
}

std::string format_metric(std::optional<double> v) { return v ? fmt9(*v) : std::string(); }

void write_metrics_csv(const std::vector<MetricsRecord>& records, std::ostream& out) {
  out << kMetricsHeader << '\n';
  for (const auto& r : records) {
    out << r.run_id << ',' << r.seed << ',' << r.epoch << ',' << to_string(r.split) << ',' << fmt9(r.loss) << ','
        << fmt9(r.accuracy) << ',' << fmt9(r.lr) << ',' << format_metric(r.sharpness) << ','
        << format_metric(r.adaptive_sharpness) << ',' << r.grad_evals << ',' << format_metric(r.wall_ms) << '\n';
  }
}

std::vector<MetricsRecord> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::runtime_error("metrics CSV: unexpected header '" + line + "'");
  }
  std::vector<MetricsRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 11) {
      throw std::runtime_error("metrics CSV line " + std::to_string(line_no) + ": expected 11 columns, got " +
                               std::to_string(cells.size()));
    }
    auto opt = [](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return std::stod(s);
    };
    try {
      MetricsRecord r;
      r.run_id = cells[0];
      r.seed = std::stoull(cells[1]);
      r.epoch = std::stoull(cells[2]);
      if (cells[3] == "train") {
        r.split = Split::train;
      } else if (cells[3] == "test") {
        r.split = Split::test;
      } else {
        throw std::invalid_argument("split '" + cells[3] + "'");
      }
      r.loss = std::stod(cells[4]);
      r.accuracy = std::stod(cells[5]);
      r.lr = std::stod(cells[6]);
      r.sharpness = opt(cells[7]);
      r.adaptive_sharpness = opt(cells[8]);
      r.grad_evals = std::stoull(cells[9]);
      r.wall_ms = opt(cells[10]);
      records.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw std::runtime_error("metrics CSV line " + std::to_string(line_no) + ": bad value (" + e.what() + ")");
    }
  }
  return records;
}

Evaluation evaluate(const Model& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("cannot evaluate on an empty dataset");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  const auto all = iota_indices(data.size());
  for (std::size_t start = 0; start < data.size(); start += kEvalChunk) {
    const std::size_t stop = std::min(start + kEvalChunk, data.size());
    std::span<const std::size_t> idx(all.data() + start, stop - start);
    const Tensor logits = model.predict(batch_input(data, idx, model.input_shape()));
    const auto labels = data.gather_labels(idx);
    Graph g(false);
    loss_sum += softmax_cross_entropy(g.constant(logits), labels).value().item() * static_cast<double>(idx.size());
    const std::size_t classes = logits.dim(1);
    const auto v = logits.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto row = v.subspan(i * classes, classes);
      const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == labels[i]) ++correct;
    }
  }
  const double n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

RunResult run_training(const ExperimentConfig& config, std::uint64_t seed) {
  ExperimentConfig cfg = resolve(config);
  cfg.seeds = {seed};
  const auto data = make_datasets(cfg);
  Model model = make_model(cfg, seed);
  check_compatible(model, data.train);
  check_compatible(model, data.test);

  Optimizer optimizer(make_optimizer_settings(cfg));
  const Schedule schedule{parse_schedule_kind(cfg.schedule.kind), cfg.optimizer.lr, cfg.schedule.min_lr,
                          cfg.epochs};
  const BatchIterator batches(data.train.size(), cfg.batch_size, seed);
  const Dataset probe_slice = data.train.head(cfg.sharpness.slice);

  RunResult run{run_id_for(cfg.label, seed), cfg.label, seed, cfg, {}, model, 0, 0};
  const auto started = std::chrono::steady_clock::now();

  auto record_epoch = [&](std::size_t epoch, double lr) {
    std::optional<double> naive, adaptive, wall;
    const bool probe = cfg.sharpness.enabled && (epoch % cfg.sharpness.every == 0 || epoch == cfg.epochs);
    if (probe) {
      SharpnessOptions opts;
      opts.probes = cfg.sharpness.probes;
      opts.seed = Rng::derive(seed, Stream::probe, epoch).next_u64();
      opts.rho = cfg.sharpness.rho;
      naive = estimate_sharpness(model, probe_slice, opts).value;
      opts.rho = cfg.sharpness.adaptive_rho;
      opts.adaptive = true;
      opts.eta = cfg.sharpness.eta;
      adaptive = estimate_sharpness(model, probe_slice, opts).value;
    }
    if (cfg.record_wall_time) {
      wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }
    for (const Dataset* split : {&data.train, &data.test}) {
      const auto ev = evaluate(model, *split);
      MetricsRecord r;
      r.run_id = run.run_id;
      r.seed = seed;
      r.epoch = epoch;
      r.split = split->split;
      r.loss = ev.loss;
      r.accuracy = ev.accuracy;
      r.lr = lr;
      if (split->split == Split::train) {
        r.sharpness = naive;
        r.adaptive_sharpness = adaptive;
      }
      r.grad_evals = run.grad_evals;
      r.wall_ms = wall;
      run.records.push_back(std::move(r));
    }
  };

  record_epoch(0, schedule.lr_at(0));
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = schedule.lr_at(epoch - 1);
    optimizer.set_learning_rate(lr);
    for (const auto& idx : batches.batches(epoch - 1)) {
      const Tensor x = batch_input(data.train, idx, model.input_shape());
      const auto labels = data.train.gather_labels(idx);
      optimizer.step(model.params(), [&](int pass) {
        Graph g;
        Var logits = model.forward(g, g.constant(x), Mode::train, pass == 0);
        Var loss = softmax_cross_entropy(logits, labels);
        g.backward(loss);
        ++run.grad_evals;
        return loss.value().item();
      });
      ++run.steps;
    }
    record_epoch(epoch, lr);
  }
  run.model = std::move(model);
  return run;
}

void write_histogram_csv(const Histogram& h, std::ostream& out) {
  out << "bin_left,bin_right,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    out << fmt9(h.edges[b]) << ',' << fmt9(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
  }
  out << "# excess_kurtosis=" << fmt9(h.excess_kurtosis) << ",n=" << h.total << '\n';
}

void write_run(const RunResult& run, const fs::path& dir) {
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("metrics.csv");
    write_metrics_csv(run.records, out);
  }
  {
    auto out = open("resolved.config");
    out << to_json(run.config);
  }
  save_checkpoint(run.model, (dir / "final.ckpt").string());
  {
    auto out = open("first_layer_hist.csv");
    write_histogram_csv(weight_histogram(run.model, run.model.first_layer_weight_name(), run.config.histogram_bins),
                        out);
  }
}

MeanStd mean_std(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty list");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  MeanStd out{mean, std::nullopt};
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    out.std = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

RunData to_run_data(const RunResult& run) {
  const auto h = weight_histogram(run.model, run.model.first_layer_weight_name(), run.config.histogram_bins);
  return {run.label, run.run_id, run.config, run.records, h.excess_kurtosis};
}

namespace {

const MetricsRecord* find_record(const std::vector<MetricsRecord>& records, std::size_t epoch, Split split) {
  for (const auto& r : records)
    if (r.epoch == epoch && r.split == split) return &r;
  return nullptr;
}

std::size_t last_epoch(const RunData& run) {
  std::size_t e = 0;
  for (const auto& r : run.records) e = std::max(e, r.epoch);
  return e;
}

auto group_key(const RunData& r) {
  return std::make_tuple(r.config.optimizer.kind, r.config.batch_size, r.config.model.batchnorm, r.group);
}

}  // namespace

AggregateResult aggregate(std::vector<RunData> runs) {
  std::sort(runs.begin(), runs.end(), [](const RunData& a, const RunData& b) {
    return std::make_tuple(group_key(a), a.config.seeds.front(), a.run_id) <
           std::make_tuple(group_key(b), b.config.seeds.front(), b.run_id);
  });
  AggregateResult agg;
  std::size_t i = 0;
  while (i < runs.size()) {
    std::size_t j = i;
    while (j < runs.size() && runs[j].group == runs[i].group) ++j;
    const std::span<const RunData> members(runs.data() + i, j - i);
    const std::string& group = runs[i].group;

    std::vector<CurvePoint> curve;
    std::size_t max_epoch = 0;
    for (const auto& r : members) max_epoch = std::max(max_epoch, last_epoch(r));
    for (std::size_t e = 0; e <= max_epoch; ++e) {
      for (Split split : {Split::train, Split::test}) {
        std::vector<double> losses, accs;
        for (const auto& r : members) {
          if (const auto* rec = find_record(r.records, e, split)) {
            losses.push_back(rec->loss);
            accs.push_back(rec->accuracy);
          }
        }
        if (losses.empty()) continue;
        const auto l = mean_std(losses);
        const auto a = mean_std(accs);
        curve.push_back({e, split, losses.size(), l.mean, l.std, a.mean, a.std});
      }
    }
    agg.curves.emplace_back(group, std::move(curve));

    std::vector<double> test_acc, train_loss, budget, kurt;
    for (const auto& r : members) {
      RunSummary s;
      s.group = group;
      s.run_id = r.run_id;
      s.method = r.config.optimizer.kind;
      s.seed = r.config.seeds.front();
      s.batch_size = r.config.batch_size;
      s.batchnorm = r.config.model.batchnorm;
      s.epochs = last_epoch(r);
      const auto* test = find_record(r.records, s.epochs, Split::test);
      const auto* train = find_record(r.records, s.epochs, Split::train);
      if (!test || !train) throw std::runtime_error(r.run_id + ": missing final-epoch metrics");
      s.final_test_accuracy = test->accuracy;
      s.final_train_loss = train->loss;
      if (r.config.equal_budget) {
        if (const auto* half = find_record(r.records, s.epochs / 2, Split::test)) s.budget_test_accuracy = half->accuracy;
      }
      s.first_layer_kurtosis = r.first_layer_kurtosis;
      test_acc.push_back(s.final_test_accuracy);
      train_loss.push_back(s.final_train_loss);
      if (s.budget_test_accuracy) budget.push_back(*s.budget_test_accuracy);
      if (s.first_layer_kurtosis && std::isfinite(*s.first_layer_kurtosis)) kurt.push_back(*s.first_layer_kurtosis);
      agg.runs.push_back(std::move(s));
    }
    GroupSummary g;
    g.group = group;
    g.n = members.size();
    const auto ta = mean_std(test_acc);
    const auto tl = mean_std(train_loss);
    g.test_accuracy_mean = ta.mean;
    g.test_accuracy_std = ta.std;
    g.train_loss_mean = tl.mean;
    g.train_loss_std = tl.std;
    if (budget.size() == members.size()) g.budget_test_accuracy_mean = mean_std(budget).mean;
    if (!kurt.empty()) g.kurtosis_mean = mean_std(kurt).mean;
    if (g.n == 1) agg.single_seed = true;
    agg.groups.push_back(std::move(g));
    i = j;
  }
  return agg;
}

void write_aggregate_csv(const AggregateResult& agg, std::ostream& out) {
  out << "group,epoch,split,n,loss_mean,loss_std,accuracy_mean,accuracy_std\n";
  for (const auto& [group, curve] : agg.curves) {
    for (const auto& p : curve) {
      out << group << ',' << p.epoch << ',' << to_string(p.split) << ',' << p.n << ',' << fmt9(p.loss_mean) << ','
          << format_metric(p.loss_std) << ',' << fmt9(p.accuracy_mean) << ',' << format_metric(p.accuracy_std)
          << '\n';
    }
  }
}

void write_summary_csv(const AggregateResult& agg, std::ostream& out) {
  out << "group,run_id,method,seed,batch_size,batchnorm,epochs,final_test_accuracy,final_train_loss,"
         "budget_test_accuracy,first_layer_kurtosis\n";
  for (const auto& s : agg.runs) {
    out << s.group << ',' << s.run_id << ',' << s.method << ',' << s.seed << ',' << s.batch_size << ','
        << (s.batchnorm ? 1 : 0) << ',' << s.epochs << ',' << fmt9(s.final_test_accuracy) << ','
        << fmt9(s.final_train_loss) << ',' << format_metric(s.budget_test_accuracy) << ','
        << format_metric(s.first_layer_kurtosis) << '\n';
  }
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string pct(double mean, const std::optional<double>& sd) {
  return sd ? pct(mean) + " ± " + pct(*sd) : pct(mean);
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

bool any_budget(const AggregateResult& agg) {
  return std::any_of(agg.runs.begin(), agg.runs.end(), [](const auto& r) { return r.budget_test_accuracy.has_value(); });
}

bool any_kurtosis(const AggregateResult& agg) {
  return std::any_of(agg.runs.begin(), agg.runs.end(), [](const auto& r) { return r.first_layer_kurtosis.has_value(); });
}

// Markdown-style table; `md` adds the header separator row.
std::string run_table(const AggregateResult& agg, bool md) {
  const bool budget = any_budget(agg);
  const bool kurt = agg.experiment == "C" && any_kurtosis(agg);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Seed", "Method", "Testing accuracy (%)", "Training loss"};
  if (budget) header.push_back("Test acc. @ E/2 (%)");
  if (kurt) header.push_back("First-layer kurtosis");
  auto runs = agg.runs;
  std::stable_sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  for (const auto& r : runs) {
    std::vector<std::string> row{std::to_string(r.seed), r.group, pct(r.final_test_accuracy),
                                 sci(r.final_train_loss)};
    if (budget) row.push_back(r.budget_test_accuracy ? pct(*r.budget_test_accuracy) : "");
    if (kurt) row.push_back(r.first_layer_kurtosis ? fmt9(*r.first_layer_kurtosis) : "");
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s = "|";
    for (std::size_t c = 0; c < cells.size(); ++c) s += " " + cells[c] + std::string(width[c] - cells[c].size(), ' ') + " |";
    return s + "\n";
  };
  std::string out = line(header);
  if (md) {
    out += "|";
    for (std::size_t w : width) out += std::string(w + 2, '-') + "|";
    out += "\n";
  }
  for (const auto& row : rows) out += line(row);
  return out;
}

std::string group_lines(const AggregateResult& agg, const std::string& bullet) {
  std::string out;
  for (const auto& g : agg.groups) {
    out += bullet + g.group + " (n=" + std::to_string(g.n) + "): test accuracy " +
           pct(g.test_accuracy_mean, g.test_accuracy_std) + "%, training loss " + sci(g.train_loss_mean);
    if (g.train_loss_std) out += " ± " + sci(*g.train_loss_std);
    if (g.kurtosis_mean) out += ", first-layer kurtosis " + fmt9(*g.kurtosis_mean);
    out += "\n";
  }
  return out;
}

// SAM-family groups at E/2 against SGD groups at E, matched on batch size.
std::string budget_lines(const AggregateResult& agg, const std::string& bullet) {
  std::string out;
  std::map<std::size_t, std::vector<const RunSummary*>> by_batch;
  for (const auto& r : agg.runs) by_batch[r.batch_size].push_back(&r);
  for (const auto& [bs, runs] : by_batch) {
    std::vector<double> sgd, sam;
    for (const auto* r : runs) {
      if (r->method == "sgd") sgd.push_back(r->final_test_accuracy);
      if (r->method == "sam" && r->budget_test_accuracy) sam.push_back(*r->budget_test_accuracy);
    }
    if (sgd.empty() || sam.empty()) continue;
    out += bullet + "equal budget (batch " + std::to_string(bs) + "): SAM at E/2 " + pct(mean_std(sam).mean) +
           "% vs SGD at E " + pct(mean_std(sgd).mean) + "%\n";
  }
  return out;
}

}  // namespace

std::string render_summary_table(const AggregateResult& agg) {
  std::string out = run_table(agg, false);
  out += group_lines(agg, "  ");
  out += budget_lines(agg, "  ");
  if (agg.single_seed) out += "  note: single seed, no standard deviation\n";
  return out;
}

std::string render_markdown(const AggregateResult& agg) {
  std::string out = "# Experiment " + (agg.experiment.empty() ? std::string("summary") : agg.experiment) + "\n\n";
  out += run_table(agg, true);
  out += "\n## Groups\n\n";
  out += group_lines(agg, "- ");
  const auto budget = budget_lines(agg, "- ");
  if (!budget.empty()) out += "\n## Equal gradient budget\n\n" + budget;
  if (agg.single_seed) out += "\nSingle seed: standard deviations are omitted.\n";
  return out;
}

void write_curves_csv(const AggregateResult& agg, const std::vector<RunData>& runs, std::ostream& out) {
  out << "group,run_id,seed,epoch,train_loss,train_accuracy,test_loss,test_accuracy,"
         "group_train_loss_mean,group_train_loss_std,group_test_accuracy_mean,group_test_accuracy_std\n";
  std::map<std::string, const std::vector<CurvePoint>*> curves;
  for (const auto& [group, curve] : agg.curves) curves[group] = &curve;
  auto sorted = runs;
  std::sort(sorted.begin(), sorted.end(), [](const RunData& a, const RunData& b) {
    return std::make_tuple(group_key(a), a.config.seeds.front(), a.run_id) <
           std::make_tuple(group_key(b), b.config.seeds.front(), b.run_id);
  });
  for (const auto& r : sorted) {
    const auto it = curves.find(r.group);
    for (std::size_t e = 0; e <= last_epoch(r); ++e) {
      const auto* train = find_record(r.records, e, Split::train);
      const auto* test = find_record(r.records, e, Split::test);
      if (!train || !test) continue;
      const CurvePoint* gtrain = nullptr;
      const CurvePoint* gtest = nullptr;
      if (it != curves.end()) {
        for (const auto& p : *it->second) {
          if (p.epoch != e) continue;
          (p.split == Split::train ? gtrain : gtest) = &p;
        }
      }
      out << r.group << ',' << r.run_id << ',' << r.config.seeds.front() << ',' << e << ',' << fmt9(train->loss)
          << ',' << fmt9(train->accuracy) << ',' << fmt9(test->loss) << ',' << fmt9(test->accuracy) << ','
          << (gtrain ? fmt9(gtrain->loss_mean) : "") << ',' << (gtrain ? format_metric(gtrain->loss_std) : "")
          << ',' << (gtest ? fmt9(gtest->accuracy_mean) : "") << ','
          << (gtest ? format_metric(gtest->accuracy_std) : "") << '\n';
    }
  }
}

namespace {

ExperimentConfig variant(const ExperimentConfig& base, const std::string& method, std::uint64_t seed) {
  ExperimentConfig cfg = base;
  // A rho given next to an sgd base configures the sweep's SAM-family runs;
  // otherwise it belongs to the base method and other methods use their default.
  if (method != base.optimizer.kind && base.optimizer.kind != "sgd") cfg.optimizer.rho.reset();
  cfg.optimizer.kind = method;
  cfg.seeds = {seed};
  return cfg;
}

}  // namespace

std::vector<ExperimentConfig> plan_experiment_A(const ExperimentConfig& base) {
  std::vector<ExperimentConfig> plan;
  for (const char* method : {"sgd", "sam"}) {
    for (auto seed : base.seeds) {
      auto cfg = variant(base, method, seed);
      cfg.label = method;
      plan.push_back(std::move(cfg));
    }
  }
  return plan;
}

std::vector<ExperimentConfig> plan_experiment_B(const ExperimentConfig& base,
                                                const std::vector<std::size_t>& batch_sizes) {
  if (batch_sizes.empty()) throw ConfigError("batch_sizes: must list at least one batch size");
  std::vector<ExperimentConfig> plan;
  for (const char* method : {"sgd", "sam"}) {
    for (auto bs : batch_sizes) {
      if (bs == 0) throw ConfigError("batch_sizes: must be positive");
      for (auto seed : base.seeds) {
        auto cfg = variant(base, method, seed);
        cfg.batch_size = bs;
        cfg.label = std::string(method) + "-bs" + std::to_string(bs);
        plan.push_back(std::move(cfg));
      }
    }
  }
  return plan;
}

std::vector<ExperimentConfig> plan_experiment_C(const ExperimentConfig& base) {
  std::vector<ExperimentConfig> plan;
  for (const char* method : {"sam", "asam"}) {
    for (bool bn : {false, true}) {
      for (auto seed : base.seeds) {
        auto cfg = variant(base, method, seed);
        cfg.model.batchnorm = bn;
        cfg.label = std::string(method) + (bn ? "-bn" : "-nobn");
        plan.push_back(std::move(cfg));
      }
    }
  }
  return plan;
}

SweepResult run_sweep(const std::string& experiment, const std::vector<ExperimentConfig>& plan,
                      const ExperimentConfig& base, const SweepOptions& opts) {
  std::vector<ExperimentConfig> resolved;
  for (const auto& cfg : plan) resolved.push_back(resolve(cfg));

  std::vector<std::optional<RunData>> results(resolved.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= resolved.size()) return;
      {
        std::lock_guard lock(error_mutex);
        if (error) return;
      }
      try {
        const auto run = run_training(resolved[i], resolved[i].seeds.front());
        if (opts.write_files) write_run(run, opts.out_dir / run.run_id);
        results[i] = to_run_data(run);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(opts.jobs, 1, std::max<std::size_t>(1, resolved.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  SweepResult out;
  for (auto& r : results) out.runs.push_back(std::move(*r));
  out.aggregate = aggregate(out.runs);
  out.aggregate.experiment = experiment;

  if (opts.write_files) {
    fs::create_directories(opts.out_dir);
    auto open = [&](const char* name) {
      std::ofstream f(opts.out_dir / name, std::ios::binary);
      if (!f) throw std::runtime_error("cannot write " + (opts.out_dir / name).string());
      return f;
    };
    {
      nlohmann::json meta;
      meta["experiment"] = experiment;
      meta["runs"] = out.runs.size();
      meta["base_config"] = nlohmann::json::parse(to_json(base));
      auto f = open("experiment.json");
      f << meta.dump(2) << '\n';
    }
    {
      auto f = open("aggregate.csv");
      write_aggregate_csv(out.aggregate, f);
    }
    {
      auto f = open("summary.csv");
      write_summary_csv(out.aggregate, f);
    }
    {
      auto f = open("summary.md");
      f << render_markdown(out.aggregate);
    }
  }
  return out;
}

SweepResult experiment_A(const ExperimentConfig& base, const SweepOptions& opts) {
  return run_sweep("A", plan_experiment_A(base), base, opts);
}

SweepResult experiment_B(const ExperimentConfig& base, const SweepOptions& opts) {
  return run_sweep("B", plan_experiment_B(base, opts.batch_sizes), base, opts);
}

SweepResult experiment_C(const ExperimentConfig& base, const SweepOptions& opts) {
  return run_sweep("C", plan_experiment_C(base), base, opts);
}

namespace {

RunData load_run_dir(const fs::path& dir) {
  RunData run;
  run.config = resolve(load_config(dir / "resolved.config"));
  run.group = run.config.label;
  std::ifstream metrics(dir / "metrics.csv");
  if (!metrics) throw std::runtime_error("cannot read " + (dir / "metrics.csv").string());
  run.records = read_metrics_csv(metrics);
  if (run.records.empty()) throw std::runtime_error((dir / "metrics.csv").string() + ": no records");
  run.run_id = run.records.front().run_id;
  if (fs::exists(dir / "final.ckpt")) {
    Model model = make_model(run.config, run.config.seeds.front());
    load_checkpoint(model, (dir / "final.ckpt").string());
    run.first_layer_kurtosis =
        weight_histogram(model, model.first_layer_weight_name(), run.config.histogram_bins).excess_kurtosis;
  }
  return run;
}

}  // namespace

std::vector<RunData> load_experiment_dir(const fs::path& dir, std::string* experiment) {
  if (!fs::is_directory(dir)) throw ConfigError(dir.string() + ": not a directory");
  if (experiment) experiment->clear();
  if (fs::exists(dir / "metrics.csv")) return {load_run_dir(dir)};
  if (experiment && fs::exists(dir / "experiment.json")) {
    std::ifstream in(dir / "experiment.json");
    try {
      const auto meta = nlohmann::json::parse(in);
      if (meta.contains("experiment") && meta["experiment"].is_string()) *experiment = meta["experiment"];
    } catch (const nlohmann::json::exception&) {
      throw std::runtime_error((dir / "experiment.json").string() + ": invalid JSON");
    }
  }
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "metrics.csv")) subdirs.push_back(entry.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  if (subdirs.empty()) throw ConfigError(dir.string() + ": no run directories found");
  std::vector<RunData> runs;
  for (const auto& d : subdirs) runs.push_back(load_run_dir(d));
  return runs;
}

}  // namespace sharpkit
