#include "sadarts/regularizers.hpp"

#include "sadarts/errors.hpp"

#include <cmath>

namespace sadarts {

Tensor sa_loss(std::span<const Tensor> alphas, double lambda_e, double nu, double mu) {
  if (alphas.empty()) throw ContractError("sa_loss: no alpha tables");
  const double k = mu * (1.0 - nu);
  Tensor total;
  for (const Tensor& a : alphas) {
    Tensor linear_part = scale(a, (1.0 + nu) / 2.0);
    Tensor value = linear_part;
    if (nu != 1.0 && k != 0.0) value = add(linear_part, scale(mul(a, erf(scale(a, k))), (1.0 - nu) / 2.0));
    Tensor term = scale(mean(value), lambda_e);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor lse_loss(std::span<const Tensor> alphas, double lambda) {
  if (alphas.empty()) throw ContractError("lse_loss: no alpha tables");
  Tensor total;
  for (const Tensor& a : alphas) {
    Tensor term = scale(sum(logsumexp(a, a.rank() - 1)), lambda);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor l2_loss(std::span<const Tensor> alphas, double lambda) {
  if (alphas.empty()) throw ContractError("l2_loss: no alpha tables");
  Tensor total;
  for (const Tensor& a : alphas) {
    Tensor term = scale(sum(square(a)), lambda);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor flops_loss(const Tensor& beta, std::span<const double> costs) {
  if (beta.rank() != 2) throw DimensionError("flops_loss: beta must be [sites, ops], got " + shape_string(beta.shape()));
  if (Index(costs.size()) != beta.dim(1)) {
    throw DimensionError("flops_loss: cost vector length " + std::to_string(costs.size()) + " does not match axis 1 (" +
                         std::to_string(beta.dim(1)) + ")");
  }
  double total = 0.0;
  Array c(Index(costs.size()));
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (costs[i] < 0.0) throw ContractError("flops_loss: negative cost");
    c[Index(i)] = costs[i];
    total += costs[i];
  }
  if (total <= 0.0) throw ContractError("flops_loss: all costs are zero");
  const Tensor cost({Index(costs.size()), 1}, c / total);
  return sum(matmul(beta, cost));
}

double LambdaSchedule::at(int epoch) const {
  if (epoch < 0) throw ContractError("lambda schedule: negative epoch");
  if (kind == Kind::linear && divisor <= 0.0) throw ContractError("lambda schedule: divisor must be positive");
  if (epoch < zero_before) return 0.0;
  return kind == Kind::linear ? double(epoch) / divisor : value;
}

std::string regularizer_name(RegularizerSpec::Kind kind) {
  switch (kind) {
    case RegularizerSpec::Kind::none: return "none";
    case RegularizerSpec::Kind::l2: return "l2";
    case RegularizerSpec::Kind::lse: return "lse";
    case RegularizerSpec::Kind::sa: return "sa";
  }
  return "none";
}

RegularizerSpec::Kind regularizer_kind(const std::string& name) {
  if (name == "none") return RegularizerSpec::Kind::none;
  if (name == "l2") return RegularizerSpec::Kind::l2;
  if (name == "lse") return RegularizerSpec::Kind::lse;
  if (name == "sa") return RegularizerSpec::Kind::sa;
  throw SchemaError("unknown regularizer '" + name + "'");
}

Tensor regularizer_loss(const RegularizerSpec& spec, const ArchParams& arch, int epoch) {
  const double lambda = spec.schedule.at(epoch);
  const std::vector<Tensor> alphas = arch.alphas();
  Tensor loss;
  if (lambda != 0.0) {
    switch (spec.kind) {
      case RegularizerSpec::Kind::none: break;
      case RegularizerSpec::Kind::l2: loss = l2_loss(alphas, lambda); break;
      case RegularizerSpec::Kind::lse: loss = lse_loss(alphas, lambda); break;
      case RegularizerSpec::Kind::sa: loss = sa_loss(alphas, lambda, spec.nu, spec.mu); break;
    }
  }
  if (spec.flops_weight > 0.0) {
    for (const Tensor& a : alphas) {
      Tensor term = scale(flops_loss(softmax(a, 1), spec.costs), spec.flops_weight);
      loss = loss.defined() ? add(loss, term) : term;
    }
  }
  return loss;
}

}  // namespace sadarts
