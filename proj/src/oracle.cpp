#include "sadarts/oracle.hpp"

#include "sadarts/config_json.hpp"
#include "sadarts/digest.hpp"
#include "sadarts/errors.hpp"
#include "sadarts/ops.hpp"
#include "sadarts/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>

namespace sadarts {

void TrainConfig::validate() const {
  if (steps <= 0) throw ContractError("train config: steps must be positive");
  if (batch_size <= 0) throw ContractError("train config: batch_size must be positive");
  if (!(lr > 0.0)) throw ContractError("train config: lr must be positive");
  if (!(grad_clip > 0.0)) throw ContractError("train config: grad_clip must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ContractError("train config: bad train_fraction");
}

namespace {

// Endless sequence of training positions, reshuffled every pass.
class BatchStream {
 public:
  BatchStream(Index n, Index batch_size, std::uint64_t seed) : n_(n), batch_size_(batch_size), rng_(seed) {}

  std::vector<int> next() {
    if (queue_.empty()) {
      for (auto& b : shuffled_batches(n_, batch_size_, rng_)) queue_.push_back(std::move(b));
    }
    std::vector<int> b = std::move(queue_.front());
    queue_.pop_front();
    return b;
  }

 private:
  Index n_;
  Index batch_size_;
  Rng rng_;
  std::deque<std::vector<int>> queue_;
};

void check_geometry(const TrainConfig& cfg, const SearchData& data) {
  const Dataset& d = data.train.dataset();
  if (d.num_classes != cfg.stack.num_classes || d.image_size != cfg.stack.image_size ||
      d.channels != cfg.stack.in_channels) {
    throw ContractError("train: dataset geometry does not match the network stack");
  }
}

}  // namespace

Genotype uniform_genotype(const CellTopology& topo, const std::string& op) {
  if (topo.candidate_index(op) < 0) throw CatalogError("'" + op + "' is not a candidate of " + topo.space);
  if (topo.keep_per_node > 0) throw ContractError("uniform_genotype: needs a keep-all topology");
  Genotype g{topo.space, {}, {}};
  for (int e : topo.searchable_edges()) g.normal.push_back({topo.edges[std::size_t(e)].src, topo.edges[std::size_t(e)].dst, op});
  return g;
}

TrainOutcome train_discrete(const Genotype& genotype, const CellTopology& topo, const TrainConfig& cfg,
                            std::uint64_t seed, const SearchData& data) {
  cfg.validate();
  check_geometry(cfg, data);
  const Network net = instantiate_discrete(genotype, topo, cfg.stack, seed);
  const std::vector<Tensor> params = net.parameters();
  for (const Tensor& p : params) p.set_requires_grad(true);
  MomentumSgd opt(params, cfg.sgd);
  BatchStream stream(data.train.size(), cfg.batch_size, seed + 1);

  TrainOutcome out;
  out.param_count = net.parameter_count();
  for (int step = 0; step < cfg.steps; ++step) {
    const Batch b = data.train.batch(stream.next());
    const Tensor loss = cross_entropy(net.forward(b.x), b.labels);
    if (!std::isfinite(loss.item())) {
      Tape::active().clear();
      throw DivergenceError("train: loss is not finite at step " + std::to_string(step));
    }
    opt.zero_grad();
    backward(loss);
    clip_grad_norm(params, cfg.grad_clip);
    opt.step(cosine_lr(cfg.lr, step, cfg.steps));
    out.train_losses.push_back(loss.item());
  }
  const EvalMetrics m = evaluate(net, nullptr, data.val.all());
  out.val_accuracy = m.accuracy;
  out.val_loss = m.loss;
  return out;
}

TrainOutcome train_skip_baseline(const CellTopology& topo, const TrainConfig& cfg, std::uint64_t seed,
                                 const SearchData& data) {
  cfg.validate();
  check_geometry(cfg, data);
  if (cfg.stack.stem_kernel != 1) throw ContractError("skip baseline: needs a 1x1 stem");

  // Input-output path count of one cell: each path carries the input once.
  std::vector<double> paths(std::size_t(topo.num_nodes), 0.0);
  for (int i = 0; i < topo.num_inputs; ++i) paths[std::size_t(i)] = 1.0;
  for (int node : topo.intermediate_nodes()) {
    for (int e : topo.incoming(node)) paths[std::size_t(node)] += paths[std::size_t(topo.edges[std::size_t(e)].src)];
  }
  const double gain = std::pow(paths[std::size_t(topo.output_node())], cfg.stack.num_cells);

  // Start from the same weights as the network trainer.
  const Network init = instantiate_discrete(uniform_genotype(topo, "skip_connect"), topo, cfg.stack, seed);
  const std::vector<Tensor> init_params = init.parameters();
  const Index C = cfg.stack.channels, I = cfg.stack.in_channels, K = cfg.stack.num_classes;
  const Index P = cfg.stack.image_size * cfg.stack.image_size;
  Eigen::MatrixXd W = Eigen::Map<const Eigen::MatrixXd>(init_params.front().data().data(), I, C).transpose();
  Eigen::MatrixXd H = Eigen::Map<const Eigen::MatrixXd>(init_params[init_params.size() - 2].data().data(), C, K).transpose();
  Eigen::VectorXd bias = init_params.back().data().matrix();

  Eigen::MatrixXd bufW, bufH;
  Eigen::VectorXd bufB;
  bool started = false;
  const double wd = cfg.sgd.weight_decay, mom = cfg.sgd.momentum;

  // Returns per-sample pooled features h [N x C] and the pre-activation sign mask.
  auto features = [&](const Batch& b, std::vector<Eigen::MatrixXd>* z_out) {
    const Index n = b.x.dim(0);
    Eigen::MatrixXd h(n, C);
    for (Index s = 0; s < n; ++s) {
      const Eigen::Map<const Eigen::MatrixXd> x(b.x.data().data() + s * I * P, P, I);
      const Eigen::MatrixXd z = x * W.transpose();  // P x C
      h.row(s) = gain * z.cwiseMax(0.0).colwise().mean();
      if (z_out) z_out->push_back(z);
    }
    return h;
  };
  auto softmax_rows = [](Eigen::MatrixXd logits) {
    for (Index r = 0; r < logits.rows(); ++r) {
      logits.row(r).array() -= logits.row(r).maxCoeff();
      logits.row(r) = logits.row(r).array().exp().matrix();
      logits.row(r) /= logits.row(r).sum();
    }
    return logits;
  };

  TrainOutcome out;
  out.param_count = W.size() + H.size() + bias.size();
  BatchStream stream(data.train.size(), cfg.batch_size, seed + 1);
  for (int step = 0; step < cfg.steps; ++step) {
    const Batch b = data.train.batch(stream.next());
    const Index n = b.x.dim(0);
    std::vector<Eigen::MatrixXd> zs;
    const Eigen::MatrixXd h = features(b, &zs);
    const Eigen::MatrixXd prob = softmax_rows((h * H.transpose()).rowwise() + bias.transpose());
    double loss = 0.0;
    Eigen::MatrixXd dlogits = prob;
    for (Index s = 0; s < n; ++s) {
      const int y = b.labels[std::size_t(s)];
      loss -= std::log(prob(s, y));
      dlogits(s, y) -= 1.0;
    }
    loss /= double(n);
    dlogits /= double(n);

    Eigen::MatrixXd gH = dlogits.transpose() * h;
    Eigen::VectorXd gB = dlogits.colwise().sum().transpose();
    const Eigen::MatrixXd dh = dlogits * H;
    Eigen::MatrixXd gW = Eigen::MatrixXd::Zero(C, I);
    for (Index s = 0; s < n; ++s) {
      const Eigen::Map<const Eigen::MatrixXd> x(b.x.data().data() + s * I * P, P, I);
      const Eigen::MatrixXd active = (zs[std::size_t(s)].array() > 0.0).cast<double>().matrix();
      const Eigen::MatrixXd dz = active * (gain / double(P) * dh.row(s)).asDiagonal();  // P x C
      gW += dz.transpose() * x;
    }
    const double norm = std::sqrt(gW.squaredNorm() + gH.squaredNorm() + gB.squaredNorm());
    if (norm > cfg.grad_clip) {
      const double f = cfg.grad_clip / norm;
      gW *= f;
      gH *= f;
      gB *= f;
    }
    gW += wd * W;
    gH += wd * H;
    gB += wd * bias;
    if (!started) {
      bufW = gW;
      bufH = gH;
      bufB = gB;
      started = true;
    } else {
      bufW = mom * bufW + gW;
      bufH = mom * bufH + gH;
      bufB = mom * bufB + gB;
    }
    const double lr = cosine_lr(cfg.lr, step, cfg.steps);
    W -= lr * bufW;
    H -= lr * bufH;
    bias -= lr * bufB;
    out.train_losses.push_back(loss);
  }

  const Batch val = data.val.all();
  const Eigen::MatrixXd logits = (features(val, nullptr) * H.transpose()).rowwise() + bias.transpose();
  const Eigen::MatrixXd prob = softmax_rows(logits);
  int correct = 0;
  double loss = 0.0;
  for (Index s = 0; s < logits.rows(); ++s) {
    Index best = 0;
    for (Index k = 1; k < K; ++k) {
      if (logits(s, k) > logits(s, best)) best = k;
    }
    correct += best == val.labels[std::size_t(s)];
    loss -= std::log(prob(s, val.labels[std::size_t(s)]));
  }
  out.val_accuracy = double(correct) / double(logits.rows());
  out.val_loss = loss / double(logits.rows());
  return out;
}

const BenchmarkEntry* TabularBenchmark::find(const std::string& key) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), key,
                             [](const BenchmarkEntry& e, const std::string& k) { return e.key < k; });
  return it != entries.end() && it->key == key ? &*it : nullptr;
}

std::string benchmark_config_hash(const std::string& space, const TrainConfig& cfg,
                                  const std::vector<std::uint64_t>& seeds) {
  const Json j{{"space", space}, {"train", to_json(cfg)}, {"seeds", seeds}};
  return sha256_hex(j.dump());
}

namespace {

std::string digest_losses(const std::vector<double>& losses) {
  std::string text;
  char buf[40];
  for (double v : losses) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    text += buf;
  }
  return sha256_hex(text);
}

std::vector<double> coarse_curve(const std::vector<double>& losses, int pieces) {
  std::vector<double> out;
  const std::size_t n = losses.size();
  for (int k = 0; k < pieces; ++k) {
    const std::size_t lo = n * std::size_t(k) / std::size_t(pieces), hi = n * std::size_t(k + 1) / std::size_t(pieces);
    if (hi <= lo) continue;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += losses[i];
    out.push_back(s / double(hi - lo));
  }
  return out;
}

}  // namespace

TabularBenchmark build_benchmark(const std::string& space, const TrainConfig& cfg,
                                 const std::vector<std::uint64_t>& seeds, int jobs) {
  cfg.validate();
  if (seeds.empty()) throw ContractError("build_benchmark: need at least one training seed");
  const CellTopology topo = make_topology(space);
  if (topo.keep_per_node > 0) throw ContractError("build_benchmark: space must keep every edge");
  double count = 1.0;
  for (int i = 0; i < topo.num_searchable(); ++i) count *= double(topo.candidates.size());
  if (count > double(kBenchmarkCap)) {
    throw ContractError("build_benchmark: space " + space + " has " + std::to_string(std::llround(count)) +
                        " genotypes, above the cap of " + std::to_string(kBenchmarkCap));
  }
  cfg.stack.validate(topo);
  const std::vector<Genotype> all = enumerate_genotypes(topo);

  TabularBenchmark bench;
  bench.space = space;
  bench.config = cfg;
  bench.seeds = seeds;
  bench.config_hash = benchmark_config_hash(space, cfg, seeds);
  bench.entries.resize(all.size());

  // One dataset and split, shared read-only; each training owns its network.
  const SearchData data = make_search_data(make_dataset(cfg.dataset), cfg.train_fraction, cfg.split_seed);
  std::vector<TrainOutcome> outcomes(all.size() * seeds.size());
  parallel_for(outcomes.size(), jobs, [&](std::size_t i) {
    const SearchData local{data.data, DataSplit(data.data.get(), data.train.indices()),
                           DataSplit(data.data.get(), data.val.indices())};
    outcomes[i] = train_discrete(all[i / seeds.size()], topo, cfg, seeds[i % seeds.size()], local);
  });

  for (std::size_t g = 0; g < all.size(); ++g) {
    BenchmarkEntry& e = bench.entries[g];
    e.genotype = all[g];
    e.key = all[g].canonical();
    std::vector<double> losses;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const TrainOutcome& o = outcomes[g * seeds.size() + s];
      e.accuracies.push_back(o.val_accuracy);
      e.param_count = o.param_count;
      losses.insert(losses.end(), o.train_losses.begin(), o.train_losses.end());
    }
    const AlphaStats st = alpha_stats(e.accuracies);
    e.mean_accuracy = st.mean;
    e.std_accuracy = st.std;
    // the curve averages the seeds step by step
    std::vector<double> mean_curve(std::size_t(cfg.steps), 0.0);
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      for (std::size_t k = 0; k < mean_curve.size(); ++k) mean_curve[k] += losses[s * mean_curve.size() + k] / double(seeds.size());
    }
    e.loss_curve = coarse_curve(mean_curve, 10);
    e.loss_digest = digest_losses(losses);
  }
  std::sort(bench.entries.begin(), bench.entries.end(),
            [](const BenchmarkEntry& a, const BenchmarkEntry& b) { return a.key < b.key; });
  return bench;
}

std::string benchmark_to_json(const TabularBenchmark& bench) {
  Json entries = Json::object();
  for (const BenchmarkEntry& e : bench.entries) {
    entries[e.key] = {{"genotype", Json::parse(genotype_to_json(e.genotype))},
                      {"accuracies", e.accuracies},
                      {"mean_accuracy", e.mean_accuracy},
                      {"std_accuracy", e.std_accuracy},
                      {"param_count", e.param_count},
                      {"loss_curve", e.loss_curve},
                      {"loss_digest", e.loss_digest}};
  }
  const Json j{{"format", "sadarts-tabular-benchmark"},
               {"version", 1},
               {"space", bench.space},
               {"train", to_json(bench.config)},
               {"seeds", bench.seeds},
               {"config_hash", bench.config_hash},
               {"entries", entries}};
  return j.dump(1);
}

TabularBenchmark benchmark_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("benchmark: not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "sadarts-tabular-benchmark") throw SchemaError("benchmark: unknown format");
  if (j.value("version", -1) != 1) throw SchemaError("benchmark: unsupported version");
  try {
    TabularBenchmark b;
    b.space = j.at("space").get<std::string>();
    b.config = train_config_from_json(j.at("train"));
    b.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    b.config_hash = j.at("config_hash").get<std::string>();
    if (b.config_hash != benchmark_config_hash(b.space, b.config, b.seeds)) {
      throw IntegrityError("benchmark: configuration hash mismatch; the table is stale or edited");
    }
    for (auto it = j.at("entries").begin(); it != j.at("entries").end(); ++it) {
      BenchmarkEntry e;
      e.key = it.key();
      e.genotype = genotype_from_json(it.value().at("genotype").dump());
      if (e.genotype.canonical() != e.key) throw IntegrityError("benchmark: entry key does not match its genotype");
      e.accuracies = it.value().at("accuracies").get<std::vector<double>>();
      e.mean_accuracy = it.value().at("mean_accuracy").get<double>();
      e.std_accuracy = it.value().at("std_accuracy").get<double>();
      e.param_count = it.value().at("param_count").get<Index>();
      e.loss_curve = it.value().at("loss_curve").get<std::vector<double>>();
      e.loss_digest = it.value().at("loss_digest").get<std::string>();
      b.entries.push_back(std::move(e));
    }
    std::sort(b.entries.begin(), b.entries.end(),
              [](const BenchmarkEntry& x, const BenchmarkEntry& y) { return x.key < y.key; });
    return b;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("benchmark: ") + e.what());
  }
}

namespace {

std::vector<const BenchmarkEntry*> ranked(const TabularBenchmark& bench) {
  std::vector<const BenchmarkEntry*> order;
  for (const BenchmarkEntry& e : bench.entries) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const BenchmarkEntry* a, const BenchmarkEntry* b) {
    if (a->mean_accuracy != b->mean_accuracy) return a->mean_accuracy > b->mean_accuracy;
    return a->key < b->key;
  });
  return order;
}

}  // namespace

Rank rank_of(const TabularBenchmark& bench, const Genotype& genotype) {
  const std::string key = genotype.canonical();
  if (!bench.find(key)) throw LookupError("rank_of: genotype " + key + " is not in the table");
  const auto order = ranked(bench);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i]->key == key) {
      return {int(i) + 1, order.front()->mean_accuracy - order[i]->mean_accuracy, order[i]->mean_accuracy};
    }
  }
  throw LookupError("rank_of: genotype " + key + " is not in the table");
}

double regret_quantile(const TabularBenchmark& bench, double q) {
  if (bench.entries.empty()) throw ContractError("regret_quantile: empty table");
  if (!(q >= 0.0 && q <= 1.0)) throw ContractError("regret_quantile: q must lie in [0, 1]");
  const auto order = ranked(bench);
  std::vector<double> regrets;
  for (const BenchmarkEntry* e : order) regrets.push_back(order.front()->mean_accuracy - e->mean_accuracy);
  const double pos = q * double(regrets.size() - 1);
  const auto lo = std::size_t(std::floor(pos));
  const auto hi = std::min(lo + 1, regrets.size() - 1);
  return regrets[lo] + (pos - double(lo)) * (regrets[hi] - regrets[lo]);
}

}  // namespace sadarts
