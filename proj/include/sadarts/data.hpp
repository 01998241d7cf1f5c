#pragma once

#include "sadarts/random.hpp"
#include "sadarts/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sadarts {

/// Seeded synthetic image classification data.
///
///   blobs  2 classes; a Gaussian bump at a random position over a class-
///          dependent background level, plus pixel noise.
///   bars   4 classes; a short line segment at 0, 90, 45 or 135 degrees at
///          a random position, plus pixel noise. `cue` adds a class-
///          dependent brightness offset (classes 0,1 vs 2,3), which a
///          model without spatial filters can pick up.
struct DatasetSpec {
  std::string generator = "bars";
  Index samples = 256;
  Index image_size = 8;
  std::uint64_t seed = 0;
  double noise = 0.3;
  double cue = 0.0;
};

struct Dataset {
  Index channels = 1;
  Index image_size = 0;
  int num_classes = 0;
  Array images;
  std::vector<int> labels;

  Index size() const { return Index(labels.size()); }
  /// Fraction of the most common label.
  double majority_rate() const;
};

Dataset make_dataset(const DatasetSpec& spec);
const std::vector<std::string>& generator_names();
/// Class count of a generator; SchemaError for an unknown name.
int generator_classes(const std::string& generator);

struct Batch {
  Tensor x;
  std::vector<int> labels;
};

Batch make_batch(const Dataset& data, std::span<const int> indices);

/// A subset of a dataset that counts every sample it hands out.
class DataSplit {
 public:
  DataSplit() = default;
  DataSplit(const Dataset* data, std::vector<int> indices) : data_(data), indices_(std::move(indices)) {}

  Index size() const { return Index(indices_.size()); }
  const std::vector<int>& indices() const { return indices_; }
  const Dataset& dataset() const { return *data_; }

  /// Samples at the given positions within the split.
  Batch batch(std::span<const int> positions) const;
  /// The whole split in order.
  Batch all() const;

  long reads() const { return reads_; }

 private:
  const Dataset* data_ = nullptr;
  std::vector<int> indices_;
  mutable long reads_ = 0;
};

/// Disjoint seeded split covering every sample, stratified by label: the
/// first part gets round(fraction * n) samples, each class contributing
/// floor(fraction * n_c) plus at most one of the leftover slots.
/// Throws ContractError when either part would be empty.
std::pair<std::vector<int>, std::vector<int>> make_splits(const std::vector<int>& labels, double fraction,
                                                          std::uint64_t seed);

/// Consecutive batches of a seeded shuffle of 0..n-1; the last batch may
/// be short.
std::vector<std::vector<int>> shuffled_batches(Index n, Index batch_size, Rng& rng);

}  // namespace sadarts
