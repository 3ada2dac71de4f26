// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON (de)serialisation and validation of ExperimentConfig.

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"
#include "sharpkit/experiment.hpp"

namespace sharpkit {

using nlohmann::json;

namespace {

// Typed field access on one JSON object, tracking the dotted path for errors.
class FieldReader {
 public:
  FieldReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail("", "expected an object");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(field(key) + ": " + what);
  }

  std::string field(const std::string& key) const {
    if (path_.empty()) return key.empty() ? "<root>" : key;
    return key.empty() ? path_ : path_ + "." + key;
  }

  /// Rejects keys outside `known`.
  void allow_only(std::initializer_list<const char*> known) const {
    std::set<std::string> ok(known.begin(), known.end());
    for (const auto& [key, value] : obj_.items()) {
      if (!ok.count(key)) fail(key, "unknown field");
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }
  FieldReader child(const char* key) const { return FieldReader(obj_.at(key), field(key)); }

  void read(const char* key, std::string& out) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_string()) fail(key, "expected a string");
    out = v.get<std::string>();
  }

  void read(const char* key, bool& out) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_boolean()) fail(key, "expected true or false");
    out = v.get<bool>();
  }

  void read(const char* key, double& out) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_number()) fail(key, "expected a number");
    out = v.get<double>();
  }

  void read(const char* key, std::optional<double>& out) const {
    if (!has(key) || obj_.at(key).is_null()) return;
    double v = 0.0;
    read(key, v);
    out = v;
  }

  template <typename T>
    requires std::is_unsigned_v<T>
  void read(const char* key, T& out) const {
    if (!has(key)) return;
    out = static_cast<T>(to_count(obj_.at(key), field(key)));
  }

  template <typename T>
  void read_list(const char* key, std::vector<T>& out) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_array()) fail(key, "expected a list");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(static_cast<T>(to_count(v[i], field(key) + "[" + std::to_string(i) + "]")));
    }
  }

 private:
  static std::uint64_t to_count(const json& v, const std::string& where) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
      if (v.get<std::int64_t>() < 0) throw ConfigError(where + ": must be non-negative");
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    throw ConfigError(where + ": expected a non-negative integer");
  }

  const json& obj_;
  std::string path_;
};

ExperimentConfig from_json(const json& root) {
  ExperimentConfig cfg;
  FieldReader r(root, "");
  r.allow_only({"name", "label", "model", "dataset", "optimizer", "schedule", "epochs", "batch_size", "seeds",
                "sharpness", "equal_budget", "record_wall_time", "histogram_bins"});
  r.read("name", cfg.name);
  r.read("label", cfg.label);
  r.read("epochs", cfg.epochs);
  r.read("batch_size", cfg.batch_size);
  r.read_list("seeds", cfg.seeds);
  r.read("equal_budget", cfg.equal_budget);
  r.read("record_wall_time", cfg.record_wall_time);
  r.read("histogram_bins", cfg.histogram_bins);

  if (r.has("model")) {
    auto m = r.child("model");
    m.allow_only({"kind", "widths", "batchnorm", "bias", "in_channels", "image_size", "num_classes"});
    m.read("kind", cfg.model.kind);
    m.read_list("widths", cfg.model.widths);
    m.read("batchnorm", cfg.model.batchnorm);
    m.read("bias", cfg.model.bias);
    m.read("in_channels", cfg.model.in_channels);
    m.read("image_size", cfg.model.image_size);
    m.read("num_classes", cfg.model.num_classes);
  }
  if (r.has("dataset")) {
    auto d = r.child("dataset");
    d.allow_only({"kind", "n_train", "n_test", "classes", "spread", "noise", "turns", "image_size", "data_seed",
                  "normalization", "train_images", "train_labels", "test_images", "test_labels", "train_csv",
                  "test_csv"});
    auto& ds = cfg.dataset;
    d.read("kind", ds.kind);
    d.read("n_train", ds.n_train);
    d.read("n_test", ds.n_test);
    d.read("classes", ds.classes);
    d.read("spread", ds.spread);
    d.read("noise", ds.noise);
    d.read("turns", ds.turns);
    d.read("image_size", ds.image_size);
    d.read("data_seed", ds.data_seed);
    d.read("normalization", ds.normalization);
    d.read("train_images", ds.train_images);
    d.read("train_labels", ds.train_labels);
    d.read("test_images", ds.test_images);
    d.read("test_labels", ds.test_labels);
    d.read("train_csv", ds.train_csv);
    d.read("test_csv", ds.test_csv);
  }
  if (r.has("optimizer")) {
    auto o = r.child("optimizer");
    o.allow_only({"kind", "rho", "eta", "lr", "momentum", "weight_decay"});
    o.read("kind", cfg.optimizer.kind);
    o.read("rho", cfg.optimizer.rho);
    o.read("eta", cfg.optimizer.eta);
    o.read("lr", cfg.optimizer.lr);
    o.read("momentum", cfg.optimizer.momentum);
    o.read("weight_decay", cfg.optimizer.weight_decay);
  }
  if (r.has("schedule")) {
    auto s = r.child("schedule");
    s.allow_only({"kind", "min_lr"});
    s.read("kind", cfg.schedule.kind);
    s.read("min_lr", cfg.schedule.min_lr);
  }
  if (r.has("sharpness")) {
    auto s = r.child("sharpness");
    s.allow_only({"enabled", "rho", "adaptive_rho", "eta", "probes", "slice", "every"});
    s.read("enabled", cfg.sharpness.enabled);
    s.read("rho", cfg.sharpness.rho);
    s.read("adaptive_rho", cfg.sharpness.adaptive_rho);
    s.read("eta", cfg.sharpness.eta);
    s.read("probes", cfg.sharpness.probes);
    s.read("slice", cfg.sharpness.slice);
    s.read("every", cfg.sharpness.every);
  }
  return cfg;
}

[[noreturn]] void invalid(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("<root>: invalid JSON: ") + e.what());
  }
  auto cfg = from_json(root);
  resolve(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot read config file");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ExperimentConfig resolve(ExperimentConfig cfg) {
  try {
    const auto kind = parse_optimizer_kind(cfg.optimizer.kind);
    if (kind != OptimizerKind::sgd && !cfg.optimizer.rho) {
      cfg.optimizer.rho = kind == OptimizerKind::sam ? kDefaultSamRho : kDefaultAsamRho;
    }
  } catch (const std::invalid_argument& e) {
    invalid("optimizer.kind", e.what());
  }
  if (cfg.label.empty()) cfg.label = cfg.optimizer.kind;
  validate(cfg);
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.name.empty()) invalid("name", "must not be empty");
  if (cfg.batch_size == 0) invalid("batch_size", "must be positive");
  if (cfg.seeds.empty()) invalid("seeds", "must list at least one seed");
  if (cfg.histogram_bins < 2) invalid("histogram_bins", "must be at least 2");

  const auto& m = cfg.model;
  if (m.kind == "mlp") {
    if (m.widths.size() < 2) invalid("model.widths", "needs at least 2 entries");
    for (std::size_t i = 0; i < m.widths.size(); ++i)
      if (m.widths[i] == 0) invalid("model.widths[" + std::to_string(i) + "]", "must be positive");
  } else if (m.kind == "cnn") {
    if (m.in_channels == 0) invalid("model.in_channels", "must be positive");
    if (m.num_classes == 0) invalid("model.num_classes", "must be positive");
    if (m.image_size < 4 || m.image_size % 4 != 0) invalid("model.image_size", "must be a positive multiple of 4");
  } else {
    invalid("model.kind", "expected mlp or cnn, got '" + m.kind + "'");
  }

  const auto& d = cfg.dataset;
  static const std::set<std::string> kinds{"blobs", "two_moons", "spirals", "strokes", "idx", "csv"};
  if (!kinds.count(d.kind)) invalid("dataset.kind", "unknown dataset '" + d.kind + "'");
  try {
    parse_normalization(d.normalization);
  } catch (const std::invalid_argument& e) {
    invalid("dataset.normalization", e.what());
  }
  if (d.kind == "idx") {
    if (d.train_images.empty()) invalid("dataset.train_images", "required for idx datasets");
    if (d.train_labels.empty()) invalid("dataset.train_labels", "required for idx datasets");
    if (d.test_images.empty()) invalid("dataset.test_images", "required for idx datasets");
    if (d.test_labels.empty()) invalid("dataset.test_labels", "required for idx datasets");
  } else if (d.kind == "csv") {
    if (d.train_csv.empty()) invalid("dataset.train_csv", "required for csv datasets");
    if (d.test_csv.empty()) invalid("dataset.test_csv", "required for csv datasets");
  } else {
    const std::size_t k = (d.kind == "two_moons" || d.kind == "spirals") ? 2 : d.classes;
    if (k < 2) invalid("dataset.classes", "must be at least 2");
    if (d.kind == "strokes" && k > 4) invalid("dataset.classes", "strokes supports at most 4 classes");
    if (d.n_train < 2 * k) invalid("dataset.n_train", "must be at least 2 * classes");
    if (d.n_test < 2 * k) invalid("dataset.n_test", "must be at least 2 * classes");
    if (!(d.spread >= 0.0)) invalid("dataset.spread", "must be non-negative");
    if (!(d.noise >= 0.0)) invalid("dataset.noise", "must be non-negative");
    if (d.kind == "spirals" && !(d.turns > 0.0)) invalid("dataset.turns", "must be positive");
    if (d.kind == "strokes" && (d.image_size < 4)) invalid("dataset.image_size", "must be at least 4");
  }

  const auto& o = cfg.optimizer;
  if (!(o.lr > 0.0)) invalid("optimizer.lr", "must be positive");
  if (!(o.momentum >= 0.0 && o.momentum < 1.0)) invalid("optimizer.momentum", "must be in [0, 1)");
  if (!(o.weight_decay >= 0.0)) invalid("optimizer.weight_decay", "must be non-negative");
  if (o.rho && !(*o.rho >= 0.0)) invalid("optimizer.rho", "must be non-negative");
  if (!(o.eta >= 0.0)) invalid("optimizer.eta", "must be non-negative");

  try {
    parse_schedule_kind(cfg.schedule.kind);
  } catch (const std::invalid_argument& e) {
    invalid("schedule.kind", e.what());
  }
  if (!(cfg.schedule.min_lr >= 0.0 && cfg.schedule.min_lr <= o.lr)) {
    invalid("schedule.min_lr", "must be in [0, optimizer.lr]");
  }

  const auto& s = cfg.sharpness;
  if (!(s.rho >= 0.0)) invalid("sharpness.rho", "must be non-negative");
  if (!(s.adaptive_rho >= 0.0)) invalid("sharpness.adaptive_rho", "must be non-negative");
  if (!(s.eta >= 0.0)) invalid("sharpness.eta", "must be non-negative");
  if (s.probes == 0) invalid("sharpness.probes", "must be at least 1");
  if (s.slice == 0) invalid("sharpness.slice", "must be at least 1");
  if (s.every == 0) invalid("sharpness.every", "must be at least 1");
}

std::string to_json(const ExperimentConfig& cfg) {
  const auto& m = cfg.model;
  const auto& d = cfg.dataset;
  const auto& o = cfg.optimizer;
  const auto& s = cfg.sharpness;
  json j;
  j["name"] = cfg.name;
  j["label"] = cfg.label;
  j["model"] = {{"kind", m.kind},         {"widths", m.widths},         {"batchnorm", m.batchnorm},
                {"bias", m.bias},         {"in_channels", m.in_channels}, {"image_size", m.image_size},
                {"num_classes", m.num_classes}};
  j["dataset"] = {{"kind", d.kind},
                  {"n_train", d.n_train},
                  {"n_test", d.n_test},
                  {"classes", d.classes},
                  {"spread", d.spread},
                  {"noise", d.noise},
                  {"turns", d.turns},
                  {"image_size", d.image_size},
                  {"data_seed", d.data_seed},
                  {"normalization", d.normalization},
                  {"train_images", d.train_images},
                  {"train_labels", d.train_labels},
                  {"test_images", d.test_images},
                  {"test_labels", d.test_labels},
                  {"train_csv", d.train_csv},
                  {"test_csv", d.test_csv}};
  j["optimizer"] = {{"kind", o.kind},
                    {"rho", o.rho ? json(*o.rho) : json(nullptr)},
                    {"eta", o.eta},
                    {"lr", o.lr},
                    {"momentum", o.momentum},
                    {"weight_decay", o.weight_decay}};
  j["schedule"] = {{"kind", cfg.schedule.kind}, {"min_lr", cfg.schedule.min_lr}};
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["seeds"] = cfg.seeds;
  j["sharpness"] = {{"enabled", s.enabled}, {"rho", s.rho},       {"adaptive_rho", s.adaptive_rho},
                    {"eta", s.eta},         {"probes", s.probes}, {"slice", s.slice},
                    {"every", s.every}};
  j["equal_budget"] = cfg.equal_budget;
  j["record_wall_time"] = cfg.record_wall_time;
  j["histogram_bins"] = cfg.histogram_bins;
  return j.dump(2) + "\n";
}

}  // namespace sharpkit
