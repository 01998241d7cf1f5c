#include "sadarts/tensor.hpp"

#include "sadarts/errors.hpp"

#include <sstream>

namespace sadarts {

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d <= 0) throw DimensionError("shape dimensions must be positive, got " + shape_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<detail::TensorNode>()) {
  const Index n = shape_numel(shape);
  node_->shape = std::move(shape);
  node_->data = Array::Zero(n);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, Array data, bool requires_grad) : node_(std::make_shared<detail::TensorNode>()) {
  const Index n = shape_numel(shape);
  if (n != data.size()) {
    throw DimensionError("tensor: shape " + shape_string(shape) + " holds " + std::to_string(n) +
                         " elements but data has " + std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, Array::Constant(1, value), requires_grad);
}

Tensor Tensor::vector(const std::vector<double>& values, bool requires_grad) {
  Array a(static_cast<Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) a[static_cast<Index>(i)] = values[i];
  return Tensor({static_cast<Index>(values.size())}, std::move(a), requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const Index n = shape_numel(shape);
  return Tensor(std::move(shape), Array::Constant(n, value), requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item(): tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->data[0];
}

const Array& Tensor::grad() const {
  if (!node_->has_grad) throw ContractError("grad(): tensor has no gradient");
  return node_->grad;
}

void Tensor::accumulate_grad(const Array& g) const {
  if (g.size() != node_->data.size()) {
    throw DimensionError("accumulate_grad: gradient has " + std::to_string(g.size()) + " elements, tensor " +
                         shape_string(node_->shape));
  }
  if (node_->has_grad) {
    node_->grad += g;
  } else {
    node_->grad = g;
    node_->has_grad = true;
  }
}

void Tensor::zero_grad() const {
  node_->grad.resize(0);
  node_->has_grad = false;
}

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->data, node_->requires_grad); }

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

bool Tape::grad_enabled() { return active().grad_enabled_; }

void Tape::record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  entries_.push_back(Entry{std::move(op), std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::clear() { entries_.clear(); }

NoGradGuard::NoGradGuard() : previous_(Tape::active().grad_enabled_) { Tape::active().grad_enabled_ = false; }

NoGradGuard::~NoGradGuard() { Tape::active().grad_enabled_ = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  Tape& tape = Tape::active();
  if (tape.entries_.empty()) throw ContractError("backward: tape is empty");

  loss.accumulate_grad(Array::Ones(1));
  tape.visited_.clear();
  for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    tape.visited_.push_back(it->op);
    it->backward(it->output.grad());
  }
  tape.entries_.clear();
}

}  // namespace sadarts
