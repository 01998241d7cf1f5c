#pragma once

#include "sadarts/ops.hpp"
#include "sadarts/random.hpp"

#include <memory>
#include <string>
#include <vector>

namespace sadarts {

/// A candidate operation on a cell edge with its own weights.
class Operation {
 public:
  virtual ~Operation() = default;
  virtual Tensor forward(const Tensor& x) const = 0;
  virtual std::vector<Tensor> parameters() const { return {}; }
  const std::string& name() const { return name_; }

 protected:
  explicit Operation(std::string name) : name_(std::move(name)) {}

 private:
  std::string name_;
};

using OperationPtr = std::shared_ptr<const Operation>;

struct OpCost {
  Index params = 0;
  Index mult_adds = 0;
};

/// Names of every operation the catalog can construct.
const std::vector<std::string>& catalog_names();
bool in_catalog(const std::string& name);
bool is_parametric(const std::string& name);

/// Constructs a catalog operation. Throws CatalogError for unknown names.
/// Parameter-free ops require in_channels == out_channels.
OperationPtr make_operation(const std::string& name, Index in_channels, Index out_channels, Index stride, Rng& rng);

/// Analytic parameter and multiply-add counts for one op on an
/// [in_channels, height, width] input.
OpCost op_cost(const std::string& name, Index in_channels, Index out_channels, Index stride, Index height, Index width);

/// Kaiming-uniform (fan-in, ReLU gain) initialized tensor.
Tensor kaiming_uniform(const Shape& shape, Index fan_in, Rng& rng);

/// ReLU followed by a single 1x1 convolution; used for cell preprocessing.
OperationPtr make_relu_conv1x1(Index in_channels, Index out_channels, Index stride, Rng& rng);

}  // namespace sadarts
