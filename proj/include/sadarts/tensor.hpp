#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace sadarts {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Array = Eigen::ArrayXd;

Index shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct TensorNode {
  Shape shape;
  Array data;
  Array grad;
  bool requires_grad = false;
  bool has_grad = false;
};
}  // namespace detail

/// Dense row-major real tensor with an attached gradient slot.
///
/// Copies share storage (handle semantics) so that recorded operations can
/// route gradients back to the tensors they consumed. Use clone() for an
/// independent deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, Array data, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(const std::vector<double>& values, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  Index dim(std::size_t axis) const { return node_->shape.at(axis); }
  Index numel() const { return node_->data.size(); }

  Array& data() { return node_->data; }
  const Array& data() const { return node_->data; }
  double item() const;
  double operator[](Index i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) const { node_->requires_grad = flag; }

  bool has_grad() const { return node_->has_grad; }
  const Array& grad() const;
  // Gradient slot mutators act on the shared node, so they are usable
  // through const handles.
  void accumulate_grad(const Array& g) const;
  void zero_grad() const;

  /// Deep copy of data; the copy carries no gradient.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Thread-local record of differentiable primitives in execution order.
class Tape {
 public:
  using BackwardFn = std::function<void(const Array& grad_out)>;

  struct Entry {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  static Tape& active();
  static bool grad_enabled();

  void record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn);
  void clear();
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Op names visited by the most recent backward pass, in visit order.
  const std::vector<std::string>& last_visit_order() const { return visited_; }

 private:
  friend void backward(const Tensor& loss);
  friend class NoGradGuard;

  std::vector<Entry> entries_;
  std::vector<std::string> visited_;
  bool grad_enabled_ = true;
};

/// Disables recording on the current thread's tape for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse pass from a scalar loss. Gradients are accumulated into every
/// tensor reachable from the loss that requires grad; the tape is cleared.
void backward(const Tensor& loss);

}  // namespace sadarts
