#include "sadarts/optim.hpp"

#include "sadarts/errors.hpp"

#include <cmath>
#include <numbers>

namespace sadarts {

Adam::Adam(std::vector<Tensor> params, Options opts) : params_(std::move(params)), opts_(opts) {
  if (opts_.lr <= 0.0) throw ContractError("Adam: learning rate must be positive");
  for (const Tensor& p : params_) {
    m.push_back(Array::Zero(p.numel()));
    v.push_back(Array::Zero(p.numel()));
  }
}

void Adam::step() {
  ++steps;
  const double c1 = 1.0 - std::pow(opts_.beta1, double(steps));
  const double c2 = 1.0 - std::pow(opts_.beta2, double(steps));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    Array g = p.grad();
    if (opts_.weight_decay != 0.0) g += opts_.weight_decay * p.data();
    m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
    v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g.square();
    p.data() -= opts_.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + opts_.eps);
  }
}

void Adam::zero_grad() const {
  for (const Tensor& p : params_) p.zero_grad();
}

MomentumSgd::MomentumSgd(std::vector<Tensor> params, Options opts)
    : started(params.size(), false), params_(std::move(params)), opts_(opts) {
  for (const Tensor& p : params_) buffers.push_back(Array::Zero(p.numel()));
}

void MomentumSgd::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    Array g = p.grad();
    if (opts_.weight_decay != 0.0) g += opts_.weight_decay * p.data();
    if (started[i]) {
      buffers[i] = opts_.momentum * buffers[i] + g;
    } else {
      buffers[i] = g;
      started[i] = true;
    }
    p.data() -= lr * buffers[i];
  }
}

void MomentumSgd::zero_grad() const {
  for (const Tensor& p : params_) p.zero_grad();
}

double cosine_lr(double base, int epoch, int total) {
  if (total <= 0) return base;
  return base * (1.0 + std::cos(std::numbers::pi * double(epoch) / double(total))) / 2.0;
}

double grad_norm(const std::vector<Tensor>& params) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    if (p.has_grad()) sq += p.grad().square().sum();
  }
  return std::sqrt(sq);
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (const Tensor& p : params) {
      if (!p.has_grad()) continue;
      const Array scaled = p.grad() * factor;
      p.zero_grad();
      p.accumulate_grad(scaled);
    }
  }
  return norm;
}

}  // namespace sadarts
