#pragma once

#include "sadarts/tensor.hpp"

#include <vector>

namespace sadarts {

/// Adam with L2 weight decay folded into the gradient. Parameters without a
/// gradient are skipped for that step.
class Adam {
 public:
  struct Options {
    double lr = 3e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  Adam(std::vector<Tensor> params, Options opts);

  void step();
  void zero_grad() const;

  const Options& options() const { return opts_; }
  std::vector<Tensor>& params() { return params_; }

  // Moment state, exposed for checkpointing.
  long steps = 0;
  std::vector<Array> m;
  std::vector<Array> v;

 private:
  std::vector<Tensor> params_;
  Options opts_;
};

/// SGD with heavy-ball momentum and L2 weight decay; the learning rate is set
/// per call so schedules stay outside the optimizer.
class MomentumSgd {
 public:
  struct Options {
    double momentum = 0.9;
    double weight_decay = 3e-4;
  };

  MomentumSgd(std::vector<Tensor> params, Options opts);

  void step(double lr);
  void zero_grad() const;

  const Options& options() const { return opts_; }

  std::vector<Array> buffers;
  std::vector<bool> started;

 private:
  std::vector<Tensor> params_;
  Options opts_;
};

/// base * (1 + cos(pi * epoch / total)) / 2.
double cosine_lr(double base, int epoch, int total);

/// Rescales the gradients of `params` so their joint L2 norm is at most
/// max_norm. Returns the norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

double grad_norm(const std::vector<Tensor>& params);

}  // namespace sadarts
