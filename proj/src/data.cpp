// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0

#include "sharpkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "sharpkit/random.hpp"

namespace sharpkit {

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

std::string to_string(Normalization mode) {
  switch (mode) {
    case Normalization::none: return "none";
    case Normalization::per_feature_standardize: return "per_feature_standardize";
    case Normalization::scale_to_unit: return "scale_to_unit";
  }
  return "none";
}

Normalization parse_normalization(const std::string& name) {
  if (name == "none") return Normalization::none;
  if (name == "per_feature_standardize") return Normalization::per_feature_standardize;
  if (name == "scale_to_unit") return Normalization::scale_to_unit;
  throw std::invalid_argument("unknown normalization '" + name + "'");
}

std::span<const double> Dataset::sample(std::size_t i) const {
  const auto d = feature_count();
  return std::span<const double>(features).subspan(i * d, d);
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  const auto d = feature_count();
  std::vector<double> out;
  out.reserve(indices.size() * d);
  for (auto i : indices) {
    const auto s = sample(i);
    out.insert(out.end(), s.begin(), s.end());
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  return Tensor(std::move(shape), std::move(out));
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels[i]);
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  Dataset out = *this;
  count = std::min(count, size());
  out.labels.resize(count);
  out.features.resize(count * feature_count());
  return out;
}

namespace {

void require_n(std::size_t n, std::size_t k) {
  if (k < 2) throw std::invalid_argument("need at least 2 classes, got " + std::to_string(k));
  if (n < 2 * k) {
    throw std::invalid_argument("degenerate dataset size n=" + std::to_string(n) + " for " + std::to_string(k) +
                                " classes (need n >= " + std::to_string(2 * k) + ")");
  }
}

void require_noise(double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be non-negative");
}

}  // namespace

Dataset gen_two_moons(std::size_t n, double noise_sigma, std::uint64_t seed) {
  require_n(n, 2);
  require_noise(noise_sigma);
  Rng rng = Rng::derive(seed, Stream::data);
  const std::size_t n_upper = n / 2;
  const std::size_t n_lower = n - n_upper;
  Dataset d;
  d.sample_shape = {2};
  d.num_classes = 2;
  d.features.reserve(2 * n);
  auto angle = [](std::size_t i, std::size_t count) {
    return count == 1 ? 0.0 : std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1);
  };
  for (std::size_t i = 0; i < n_upper; ++i) {
    const double t = angle(i, n_upper);
    d.features.push_back(std::cos(t));
    d.features.push_back(std::sin(t));
    d.labels.push_back(0);
  }
  for (std::size_t i = 0; i < n_lower; ++i) {
    const double t = angle(i, n_lower);
    d.features.push_back(1.0 - std::cos(t));
    d.features.push_back(0.5 - std::sin(t));
    d.labels.push_back(1);
  }
  if (noise_sigma > 0.0) {
    for (auto& v : d.features) v += noise_sigma * rng.normal();
  }
  return d;
}

Dataset gen_gaussian_blobs(std::size_t n, std::size_t k_classes, double spread, std::uint64_t seed) {
  require_n(n, k_classes);
  require_noise(spread);
  Rng rng = Rng::derive(seed, Stream::data);
  Dataset d;
  d.sample_shape = {2};
  d.num_classes = k_classes;
  d.features.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = i % k_classes;
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(k_classes);
    d.features.push_back(std::cos(phi) + spread * rng.normal());
    d.features.push_back(std::sin(phi) + spread * rng.normal());
    d.labels.push_back(static_cast<int>(label));
  }
  return d;
}

Dataset gen_spirals(std::size_t n, double turns, double noise_sigma, std::uint64_t seed) {
  require_n(n, 2);
  require_noise(noise_sigma);
  if (!(turns > 0.0)) throw std::invalid_argument("spiral turns must be positive");
  Rng rng = Rng::derive(seed, Stream::data);
  Dataset d;
  d.sample_shape = {2};
  d.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double t = 0.1 + 0.9 * rng.uniform();
    const double phi = 2.0 * std::numbers::pi * turns * t + std::numbers::pi * label;
    d.features.push_back(t * std::cos(phi) + noise_sigma * rng.normal());
    d.features.push_back(t * std::sin(phi) + noise_sigma * rng.normal());
    d.labels.push_back(label);
  }
  return d;
}

Dataset gen_stroke_images(std::size_t n, std::size_t k_classes, std::size_t size, double noise_sigma,
                          std::uint64_t seed) {
  require_n(n, k_classes);
  require_noise(noise_sigma);
  if (k_classes > 4) throw std::invalid_argument("stroke images support at most 4 classes");
  if (size < 4) throw std::invalid_argument("stroke images need size >= 4");
  Rng rng = Rng::derive(seed, Stream::data);
  Dataset d;
  d.sample_shape = {1, size, size};
  d.num_classes = k_classes;
  d.features.reserve(n * size * size);
  std::vector<double> img(size * size);
  const auto s = static_cast<std::ptrdiff_t>(size);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = i % k_classes;
    std::fill(img.begin(), img.end(), 0.0);
    const auto offset = static_cast<std::ptrdiff_t>(rng.below(size)) - s / 2;
    for (std::ptrdiff_t r = 0; r < s; ++r) {
      for (std::ptrdiff_t c = 0; c < s; ++c) {
        bool on = false;
        switch (label) {
          case 0: on = r == (offset + s / 2); break;
          case 1: on = c == (offset + s / 2); break;
          case 2: on = (c - r) == offset; break;
          default: on = (c + r) == (s - 1 + offset); break;
        }
        if (on) img[static_cast<std::size_t>(r * s + c)] = 1.0;
      }
    }
    for (auto v : img) d.features.push_back(std::clamp(v + noise_sigma * rng.normal(), 0.0, 1.0));
    d.labels.push_back(static_cast<int>(label));
  }
  return d;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw IdxError(IdxError::Kind::truncated, path + ": truncated IDX header");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::io, path + ": cannot open file");
  return in;
}

void expect_magic(std::uint32_t got, std::uint32_t want, const std::string& path) {
  if (got != want) {
    std::ostringstream msg;
    msg << path << ": bad IDX magic 0x" << std::hex << got << ", expected 0x" << want;
    throw IdxError(IdxError::Kind::bad_magic, msg.str());
  }
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t count, const std::string& path) {
  std::vector<unsigned char> buf(count);
  if (count > 0 && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count))) {
    throw IdxError(IdxError::Kind::truncated, path + ": truncated IDX payload, expected " +
                                                  std::to_string(count) + " bytes");
  }
  return buf;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, Normalization mode) {
  auto img_in = open_binary(images_path);
  auto lbl_in = open_binary(labels_path);
  expect_magic(read_be32(img_in, images_path), kIdxImageMagic, images_path);
  const auto n_images = read_be32(img_in, images_path);
  const auto rows = read_be32(img_in, images_path);
  const auto cols = read_be32(img_in, images_path);
  expect_magic(read_be32(lbl_in, labels_path), kIdxLabelMagic, labels_path);
  const auto n_labels = read_be32(lbl_in, labels_path);
  if (n_images != n_labels) {
    throw IdxError(IdxError::Kind::count_mismatch, images_path + " has " + std::to_string(n_images) +
                                                       " images but " + labels_path + " has " +
                                                       std::to_string(n_labels) + " labels");
  }
  if (rows == 0 || cols == 0) throw IdxError(IdxError::Kind::truncated, images_path + ": zero image dimension");
  const auto pixels = read_payload(img_in, std::size_t{n_images} * rows * cols, images_path);
  const auto labels = read_payload(lbl_in, n_labels, labels_path);

  Dataset d;
  d.sample_shape = {1, rows, cols};
  d.normalization = mode == Normalization::scale_to_unit ? mode : Normalization::none;
  const double scale = mode == Normalization::scale_to_unit ? 1.0 / 255.0 : 1.0;
  d.features.reserve(pixels.size());
  for (auto p : pixels) d.features.push_back(static_cast<double>(p) * scale);
  int max_label = 0;
  for (auto l : labels) {
    d.labels.push_back(static_cast<int>(l));
    max_label = std::max(max_label, static_cast<int>(l));
  }
  d.num_classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open file");
  auto split_line = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty CSV");
  const auto header = split_line(line);
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) throw std::runtime_error(path + ": no 'label' column in header");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  Dataset d;
  d.sample_shape = {header.size() - 1};
  int max_label = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      try {
        if (c == label_col) {
          const int y = std::stoi(cells[c]);
          if (y < 0) throw std::invalid_argument("negative label");
          d.labels.push_back(y);
          max_label = std::max(max_label, y);
        } else {
          d.features.push_back(std::stod(cells[c]));
        }
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad value '" + cells[c] + "'");
      }
    }
  }
  if (d.labels.empty()) throw std::runtime_error(path + ": no data rows");
  d.num_classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

FeatureStats fit_normalization(const Dataset& train, Normalization mode) {
  const auto dim = train.feature_count();
  FeatureStats st{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
  if (mode == Normalization::none || train.size() == 0) return st;
  const double n = static_cast<double>(train.size());
  if (mode == Normalization::per_feature_standardize) {
    for (std::size_t i = 0; i < train.size(); ++i)
      for (std::size_t j = 0; j < dim; ++j) st.offset[j] += train.features[i * dim + j];
    for (auto& m : st.offset) m /= n;
    std::vector<double> var(dim, 0.0);
    for (std::size_t i = 0; i < train.size(); ++i)
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = train.features[i * dim + j] - st.offset[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < dim; ++j) st.scale[j] = std::max(std::sqrt(var[j] / n), 1e-8);
  } else {
    std::vector<double> lo(dim, INFINITY), hi(dim, -INFINITY);
    for (std::size_t i = 0; i < train.size(); ++i)
      for (std::size_t j = 0; j < dim; ++j) {
        lo[j] = std::min(lo[j], train.features[i * dim + j]);
        hi[j] = std::max(hi[j], train.features[i * dim + j]);
      }
    for (std::size_t j = 0; j < dim; ++j) {
      st.offset[j] = lo[j];
      st.scale[j] = std::max(hi[j] - lo[j], 1e-8);
    }
  }
  return st;
}

Dataset apply_normalization(const Dataset& data, const FeatureStats& stats, Normalization mode) {
  if (mode == Normalization::none) return data;
  Dataset out = data;
  const auto dim = data.feature_count();
  if (stats.offset.size() != dim || stats.scale.size() != dim) {
    throw ShapeError("normalization statistics have " + std::to_string(stats.offset.size()) +
                     " features, dataset has " + std::to_string(dim));
  }
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      auto& v = out.features[i * dim + j];
      v = (v - stats.offset[j]) / stats.scale[j];
    }
  out.normalization = mode;
  return out;
}

DatasetPair normalize(const DatasetPair& pair, Normalization mode) {
  if (mode == Normalization::none) return pair;
  const auto stats = fit_normalization(pair.train, mode);
  return DatasetPair{apply_normalization(pair.train, stats, mode), apply_normalization(pair.test, stats, mode)};
}

BatchIterator::BatchIterator(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : size_(dataset_size), batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
}

std::vector<std::size_t> BatchIterator::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order(size_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::derive(seed_, Stream::shuffle, epoch);
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

std::vector<std::vector<std::size_t>> BatchIterator::batches(std::size_t epoch) const {
  const auto order = epoch_order(epoch);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    const auto end = std::min(order.size(), start + batch_size_);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::size_t BatchIterator::batches_per_epoch() const { return (size_ + batch_size_ - 1) / batch_size_; }

}  // namespace sharpkit
