// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0
//
// Datasets: synthetic generators, IDX/CSV ingestion, normalisation and
// deterministic minibatch iteration.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sharpkit/tensor.hpp"

namespace sharpkit {

enum class Split { train, test };
enum class Normalization { none, per_feature_standardize, scale_to_unit };

std::string to_string(Split split);
std::string to_string(Normalization mode);
Normalization parse_normalization(const std::string& name);

struct Dataset {
  Shape sample_shape;             // {D} or {C,H,W}
  std::vector<double> features;   // size() * prod(sample_shape), row-major
  std::vector<int> labels;
  std::size_t num_classes = 0;
  Split split = Split::train;
  Normalization normalization = Normalization::none;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_count() const { return shape_numel(sample_shape); }
  std::span<const double> sample(std::size_t i) const;

  /// Features of the listed examples as an [n, sample_shape...] tensor.
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
  /// First `count` examples (clamped to size()).
  Dataset head(std::size_t count) const;
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

/// Two interleaving half circles; n/2 on the upper arc (class 0), the rest on
/// the lower arc (class 1). noise_sigma is Gaussian jitter on both coords.
Dataset gen_two_moons(std::size_t n, double noise_sigma, std::uint64_t seed);
/// k isotropic Gaussian blobs centred on the unit circle; spread is the
/// per-coordinate standard deviation. Labels cycle 0..k-1.
Dataset gen_gaussian_blobs(std::size_t n, std::size_t k_classes, double spread, std::uint64_t seed);
/// Two interleaved spiral arms with `turns` revolutions.
Dataset gen_spirals(std::size_t n, double turns, double noise_sigma, std::uint64_t seed);
/// 1 x size x size images in [0,1]: each class is a stroke family (horizontal,
/// vertical, diagonal, anti-diagonal) at a random offset, plus clipped noise.
Dataset gen_stroke_images(std::size_t n, std::size_t k_classes, std::size_t size, double noise_sigma,
                          std::uint64_t seed);

/// Distinct IDX failure modes.
class IdxError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Reads an IDX image file (ubyte, 3 dims) and its label file (ubyte, 1 dim).
/// Pixels are divided by 255 under scale_to_unit and kept as 0..255 otherwise.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 Normalization mode = Normalization::scale_to_unit);

/// CSV with a header row; the column named "label" holds class ids, every
/// other column is a feature.
Dataset load_csv(const std::string& path);

struct FeatureStats {
  std::vector<double> offset;  // subtracted
  std::vector<double> scale;   // divided by
};

/// Statistics for `mode` computed from `train` only.
FeatureStats fit_normalization(const Dataset& train, Normalization mode);
Dataset apply_normalization(const Dataset& data, const FeatureStats& stats, Normalization mode);
/// Fits on pair.train and applies the same transform to both splits.
DatasetPair normalize(const DatasetPair& pair, Normalization mode);

/// Shuffled minibatches; the order for an epoch is a pure function of
/// (seed, epoch). The last batch may be short.
class BatchIterator {
 public:
  BatchIterator(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> epoch_order(std::size_t epoch) const;
  /// Index lists of each batch for `epoch`.
  std::vector<std::vector<std::size_t>> batches(std::size_t epoch) const;
  std::size_t batches_per_epoch() const;

 private:
  std::size_t size_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

}  // namespace sharpkit
