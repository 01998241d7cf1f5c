#include "sadarts/data.hpp"

#include "sadarts/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace sadarts {

namespace {

void render_blob(double* img, Index s, int label, Rng& rng, const DatasetSpec& spec) {
  const double background = label == 0 ? -0.5 : 0.5;
  const double cx = uniform(rng, 1.0, double(s) - 2.0);
  const double cy = uniform(rng, 1.0, double(s) - 2.0);
  const double width = uniform(rng, 0.8, 1.6);
  for (Index y = 0; y < s; ++y) {
    for (Index x = 0; x < s; ++x) {
      const double d2 = (double(x) - cx) * (double(x) - cx) + (double(y) - cy) * (double(y) - cy);
      img[y * s + x] = background + std::exp(-d2 / (2.0 * width * width)) + spec.noise * standard_normal(rng);
    }
  }
}

void render_bar(double* img, Index s, int label, Rng& rng, const DatasetSpec& spec) {
  static constexpr double angles[] = {0.0, 90.0, 45.0, 135.0};
  const double theta = angles[label] * std::numbers::pi / 180.0;
  const double dx = std::cos(theta), dy = std::sin(theta);
  const double margin = double(s) / 4.0;
  const double cx = uniform(rng, margin, double(s) - 1.0 - margin);
  const double cy = uniform(rng, margin, double(s) - 1.0 - margin);
  const double half_length = double(s) / 4.0;
  const double offset = label < 2 ? spec.cue : -spec.cue;
  for (Index y = 0; y < s; ++y) {
    for (Index x = 0; x < s; ++x) {
      const double px = double(x) - cx, py = double(y) - cy;
      const double along = px * dx + py * dy;
      const double across = -px * dy + py * dx;
      const double overshoot = std::max(0.0, std::abs(along) - half_length);
      const double d2 = across * across + overshoot * overshoot;
      img[y * s + x] = std::exp(-d2 / (2.0 * 0.45 * 0.45)) + offset + spec.noise * standard_normal(rng);
    }
  }
}

}  // namespace

const std::vector<std::string>& generator_names() {
  static const std::vector<std::string> names{"blobs", "bars"};
  return names;
}

int generator_classes(const std::string& generator) {
  if (generator == "blobs") return 2;
  if (generator == "bars") return 4;
  throw SchemaError("unknown dataset generator '" + generator + "'");
}

double Dataset::majority_rate() const {
  std::map<int, long> counts;
  for (int l : labels) ++counts[l];
  long best = 0;
  for (const auto& [label, c] : counts) best = std::max(best, c);
  return labels.empty() ? 0.0 : double(best) / double(labels.size());
}

Dataset make_dataset(const DatasetSpec& spec) {
  if (spec.samples <= 0) throw ContractError("dataset: sample count must be positive");
  if (spec.image_size < 4) throw ContractError("dataset: image size must be at least 4");
  Dataset d;
  d.image_size = spec.image_size;
  const Index plane = spec.image_size * spec.image_size;
  d.images = Array::Zero(spec.samples * plane);
  Rng rng(spec.seed);
  d.num_classes = generator_classes(spec.generator);
  for (Index i = 0; i < spec.samples; ++i) {
    // balanced labels in a fixed cycle; splits shuffle them
    const int label = int(i % d.num_classes);
    d.labels.push_back(label);
    double* img = d.images.data() + i * plane;
    if (spec.generator == "blobs") {
      render_blob(img, spec.image_size, label, rng, spec);
    } else {
      render_bar(img, spec.image_size, label, rng, spec);
    }
  }
  return d;
}

Batch make_batch(const Dataset& data, std::span<const int> indices) {
  const Index plane = data.channels * data.image_size * data.image_size;
  Array x(Index(indices.size()) * plane);
  Batch b;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= data.size()) throw ContractError("batch index out of range");
    x.segment(Index(i) * plane, plane) = data.images.segment(Index(idx) * plane, plane);
    b.labels.push_back(data.labels[std::size_t(idx)]);
  }
  b.x = Tensor({Index(indices.size()), data.channels, data.image_size, data.image_size}, std::move(x));
  return b;
}

Batch DataSplit::batch(std::span<const int> positions) const {
  std::vector<int> idx;
  idx.reserve(positions.size());
  for (int p : positions) idx.push_back(indices_.at(std::size_t(p)));
  reads_ += long(idx.size());
  return make_batch(*data_, idx);
}

Batch DataSplit::all() const {
  reads_ += long(indices_.size());
  return make_batch(*data_, indices_);
}

std::pair<std::vector<int>, std::vector<int>> make_splits(const std::vector<int>& labels, double fraction,
                                                          std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ContractError("make_splits: fraction must lie in (0, 1)");
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(int(i));

  // Per-class quotas: floors first, then the remaining slots by largest
  // remainder so the first part holds round(fraction * n) samples in total.
  const auto target = std::size_t(std::llround(double(labels.size()) * fraction));
  std::vector<std::size_t> quota;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (const auto& [label, members] : by_class) {
    const double exact = double(members.size()) * fraction;
    quota.push_back(std::size_t(std::floor(exact)));
    remainders.emplace_back(exact - std::floor(exact), quota.size() - 1);
    assigned += quota.back();
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (std::size_t i = 0; assigned < target && i < remainders.size(); ++i, ++assigned) ++quota[remainders[i].second];

  Rng rng(seed);
  std::vector<int> a, b;
  std::size_t c = 0;
  for (auto& [label, members] : by_class) {
    const auto perm = permutation<std::size_t>(rng, members.size());
    for (std::size_t i = 0; i < perm.size(); ++i) (i < quota[c] ? a : b).push_back(members[perm[i]]);
    ++c;
  }
  if (a.empty() || b.empty()) throw ContractError("make_splits: a split would be empty");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {a, b};
}

std::vector<std::vector<int>> shuffled_batches(Index n, Index batch_size, Rng& rng) {
  if (batch_size <= 0) throw ContractError("batch size must be positive");
  const auto perm = permutation<int>(rng, std::size_t(n));
  std::vector<std::vector<int>> out;
  for (Index start = 0; start < n; start += batch_size) {
    const Index end = std::min(n, start + batch_size);
    out.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return out;
}

}  // namespace sadarts
