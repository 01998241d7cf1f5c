#include "sadarts/ops_catalog.hpp"

#include "sadarts/errors.hpp"

#include <algorithm>
#include <cmath>

namespace sadarts {

namespace {

class ZeroOp final : public Operation {
 public:
  explicit ZeroOp(Index stride) : Operation("none"), stride_(stride) {}
  Tensor forward(const Tensor& x) const override {
    if (x.rank() != 4) throw DimensionError("none: input must be NCHW, got " + shape_string(x.shape()));
    const Index h = (x.dim(2) + stride_ - 1) / stride_, w = (x.dim(3) + stride_ - 1) / stride_;
    return zeros({x.dim(0), x.dim(1), h, w});
  }

 private:
  Index stride_;
};

class SkipOp final : public Operation {
 public:
  explicit SkipOp(Index stride) : Operation("skip_connect"), stride_(stride) {}
  // stride 2 keeps every other pixel, so the op stays parameter-free
  Tensor forward(const Tensor& x) const override { return stride_ == 1 ? identity(x) : subsample(x, stride_); }

 private:
  Index stride_;
};

class PoolOp final : public Operation {
 public:
  PoolOp(std::string name, bool is_max, Index stride)
      : Operation(std::move(name)), is_max_(is_max), attrs_{3, stride, 1, false} {}
  Tensor forward(const Tensor& x) const override { return is_max_ ? max_pool2d(x, attrs_) : avg_pool2d(x, attrs_); }

 private:
  bool is_max_;
  PoolAttrs attrs_;
};

struct ConvStage {
  Tensor weight;
  ConvAttrs attrs;
  bool relu_before;
};

class ConvChainOp final : public Operation {
 public:
  ConvChainOp(std::string name, std::vector<ConvStage> stages) : Operation(std::move(name)), stages_(std::move(stages)) {}
  Tensor forward(const Tensor& x) const override {
    Tensor h = x;
    for (const ConvStage& s : stages_) {
      if (s.relu_before) h = relu(h);
      h = conv2d(h, s.weight, s.attrs);
    }
    return h;
  }
  std::vector<Tensor> parameters() const override {
    std::vector<Tensor> out;
    for (const ConvStage& s : stages_) out.push_back(s.weight);
    return out;
  }

 private:
  std::vector<ConvStage> stages_;
};

struct StageSpec {
  Index out_channels;
  Index in_per_group;
  Index kernel;
  ConvAttrs attrs;
  bool relu_before;
};

// Layered description of each parametric op, shared by construction and
// cost counting.
std::vector<StageSpec> conv_stages(const std::string& name, Index cin, Index cout, Index stride) {
  auto plain = [&](Index k) {
    return std::vector<StageSpec>{{cout, cin, k, ConvAttrs{stride, k / 2, 1, 1}, true}};
  };
  auto separable = [&](Index k) {
    return std::vector<StageSpec>{
        {cin, 1, k, ConvAttrs{stride, k / 2, 1, cin}, true},
        {cin, cin, 1, ConvAttrs{1, 0, 1, 1}, false},
        {cin, 1, k, ConvAttrs{1, k / 2, 1, cin}, true},
        {cout, cin, 1, ConvAttrs{1, 0, 1, 1}, false},
    };
  };
  auto dilated = [&](Index k) {
    return std::vector<StageSpec>{
        {cin, 1, k, ConvAttrs{stride, k - 1, 2, cin}, true},
        {cout, cin, 1, ConvAttrs{1, 0, 1, 1}, false},
    };
  };
  if (name == "conv1x1") return plain(1);
  if (name == "conv3x3") return plain(3);
  if (name == "sep_conv3x3") return separable(3);
  if (name == "sep_conv5x5") return separable(5);
  if (name == "dil_conv3x3") return dilated(3);
  if (name == "dil_conv5x5") return dilated(5);
  return {};
}

Index out_size(Index in, Index kernel, const ConvAttrs& a) {
  return (in + 2 * a.padding - a.dilation * (kernel - 1) - 1) / a.stride + 1;
}

void check_geometry(const std::string& name, Index cin, Index cout, Index stride) {
  if (cin <= 0 || cout <= 0) throw ContractError(name + ": channel counts must be positive");
  if (stride != 1 && stride != 2) throw ContractError(name + ": stride must be 1 or 2");
}

}  // namespace

const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> names = {
      "avg_pool3x3", "conv1x1", "conv3x3", "dil_conv3x3", "dil_conv5x5",
      "max_pool3x3", "none", "sep_conv3x3", "sep_conv5x5", "skip_connect",
  };
  return names;
}

bool in_catalog(const std::string& name) {
  const auto& names = catalog_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

bool is_parametric(const std::string& name) {
  if (!in_catalog(name)) throw CatalogError("unknown operation '" + name + "'");
  return !conv_stages(name, 1, 1, 1).empty();
}

Tensor kaiming_uniform(const Shape& shape, Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in));
  Tensor t(shape, true);
  for (Index i = 0; i < t.numel(); ++i) t.data()[i] = uniform(rng, -bound, bound);
  return t;
}

OperationPtr make_operation(const std::string& name, Index in_channels, Index out_channels, Index stride, Rng& rng) {
  if (!in_catalog(name)) throw CatalogError("unknown operation '" + name + "'");
  check_geometry(name, in_channels, out_channels, stride);
  const auto specs = conv_stages(name, in_channels, out_channels, stride);
  if (specs.empty()) {
    if (in_channels != out_channels) {
      throw ContractError(name + ": parameter-free op needs in_channels == out_channels");
    }
    if (name == "none") return std::make_shared<ZeroOp>(stride);
    if (name == "skip_connect") return std::make_shared<SkipOp>(stride);
    return std::make_shared<PoolOp>(name, name == "max_pool3x3", stride);
  }
  std::vector<ConvStage> stages;
  for (const StageSpec& s : specs) {
    Tensor w = kaiming_uniform({s.out_channels, s.in_per_group, s.kernel, s.kernel}, s.in_per_group * s.kernel * s.kernel, rng);
    stages.push_back(ConvStage{w, s.attrs, s.relu_before});
  }
  return std::make_shared<ConvChainOp>(name, std::move(stages));
}

OperationPtr make_relu_conv1x1(Index in_channels, Index out_channels, Index stride, Rng& rng) {
  Tensor w = kaiming_uniform({out_channels, in_channels, 1, 1}, in_channels, rng);
  return std::make_shared<ConvChainOp>("relu_conv1x1", std::vector<ConvStage>{{w, ConvAttrs{stride, 0, 1, 1}, true}});
}

OpCost op_cost(const std::string& name, Index in_channels, Index out_channels, Index stride, Index height, Index width) {
  if (!in_catalog(name)) throw CatalogError("unknown operation '" + name + "'");
  check_geometry(name, in_channels, out_channels, stride);
  OpCost cost;
  if (name == "none" || name == "skip_connect") return cost;
  if (name == "avg_pool3x3" || name == "max_pool3x3") {
    // one accumulate/compare per window element; no weights
    const ConvAttrs a{stride, 1, 1, 1};
    cost.mult_adds = in_channels * 9 * out_size(height, 3, a) * out_size(width, 3, a);
    return cost;
  }
  Index h = height, w = width;
  for (const StageSpec& s : conv_stages(name, in_channels, out_channels, stride)) {
    const Index oh = out_size(h, s.kernel, s.attrs), ow = out_size(w, s.kernel, s.attrs);
    const Index per_output = s.in_per_group * s.kernel * s.kernel;
    cost.params += s.out_channels * per_output;
    cost.mult_adds += s.out_channels * per_output * oh * ow;
    h = oh;
    w = ow;
  }
  return cost;
}

}  // namespace sadarts
