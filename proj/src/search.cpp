#include "sadarts/search.hpp"

#include "sadarts/config_json.hpp"
#include "sadarts/errors.hpp"
#include "sadarts/ops.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace sadarts {

std::string strategy_name(AlphaInit::Strategy s) {
  switch (s) {
    case AlphaInit::Strategy::small_random: return "small_random";
    case AlphaInit::Strategy::constant_offset: return "constant_offset";
    case AlphaInit::Strategy::constant_negative: return "constant_negative";
  }
  return "small_random";
}

AlphaInit::Strategy strategy_from_name(const std::string& name) {
  for (auto s : {AlphaInit::Strategy::small_random, AlphaInit::Strategy::constant_offset,
                 AlphaInit::Strategy::constant_negative}) {
    if (strategy_name(s) == name) return s;
  }
  throw SchemaError("unknown alpha init strategy '" + name + "'");
}

ArchParams init_arch_params(const AlphaInit& init, const CellTopology& topo, bool has_reduce, bool with_gamma,
                            std::uint64_t seed) {
  ArchParams arch = make_arch_params(topo, has_reduce, with_gamma);
  int offset_col = -1;
  if (init.strategy == AlphaInit::Strategy::constant_offset) {
    offset_col = topo.candidate_index(init.op);
    if (offset_col < 0) throw CatalogError("alpha init: '" + init.op + "' is not a candidate of " + topo.space);
  }
  Rng rng(seed + 0x9e3779b97f4a7c15ULL);
  for (const Tensor& t : arch.alphas()) {
    Array& a = const_cast<Tensor&>(t).data();
    const Index cols = t.dim(1);
    for (Index i = 0; i < a.size(); ++i) {
      switch (init.strategy) {
        case AlphaInit::Strategy::small_random: a[i] = uniform(rng, -init.scale, init.scale); break;
        case AlphaInit::Strategy::constant_offset: a[i] = i % cols == offset_col ? init.delta : 0.0; break;
        case AlphaInit::Strategy::constant_negative: a[i] = init.value; break;
      }
    }
  }
  return arch;
}

void SearchConfig::validate() const {
  const CellTopology topo = make_topology(space);
  stack.validate(topo);
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ContractError("search config: " + what);
  };
  require(epochs >= 0, "epochs must be nonnegative");
  require(warmup_epochs >= 0, "warmup_epochs must be nonnegative");
  require(epochs == 0 || warmup_epochs < epochs, "warmup_epochs must be below epochs");
  require(batch_size > 0, "batch_size must be positive");
  require(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction must lie in (0, 1)");
  require(alpha_optimizer.lr > 0.0, "alpha learning rate must be positive");
  require(weight_lr > 0.0, "weight learning rate must be positive");
  require(effective_alpha_weight_decay() >= 0.0, "alpha weight decay must be nonnegative");
  require(weight_optimizer.weight_decay >= 0.0, "weight decay must be nonnegative");
  require(grad_clip > 0.0, "grad_clip must be positive");
  require(partial_channel_k >= 0, "partial_channel_k must be nonnegative");
  require(partial_channel_k <= stack.channels, "partial_channel_k exceeds the channel count");
  if (alpha_init.strategy == AlphaInit::Strategy::constant_offset && topo.candidate_index(alpha_init.op) < 0) {
    throw CatalogError("alpha init: '" + alpha_init.op + "' is not a candidate of " + space);
  }
}

double SearchConfig::effective_alpha_weight_decay() const {
  if (alpha_weight_decay) return *alpha_weight_decay;
  return regularizer.kind == RegularizerSpec::Kind::sa ? 0.0 : 1e-3;
}

SearchData make_search_data(Dataset data, double train_fraction, std::uint64_t seed) {
  auto shared = std::make_shared<const Dataset>(std::move(data));
  auto [train, val] = make_splits(shared->labels, train_fraction, seed);
  SearchData out{shared, DataSplit(shared.get(), std::move(train)), DataSplit(shared.get(), std::move(val))};
  return out;
}

namespace {

void append_columns(std::vector<std::string>& out, const std::string& table, const CellTopology& topo) {
  const auto searchable = topo.searchable_edges();
  for (std::size_t r = 0; r < searchable.size(); ++r) {
    const CellEdge& e = topo.edges[std::size_t(searchable[r])];
    for (const std::string& op : topo.candidates) {
      out.push_back("alpha." + table + "." + std::to_string(e.src) + "-" + std::to_string(e.dst) + "." + op);
    }
  }
}

void append_gamma_columns(std::vector<std::string>& out, const std::string& table, const CellTopology& topo,
                          const CellArch& cell) {
  if (!cell.has_gamma()) return;
  for (int node : topo.intermediate_nodes()) {
    for (int e : topo.incoming(node)) {
      const CellEdge& edge = topo.edges[std::size_t(e)];
      out.push_back("gamma." + table + "." + std::to_string(edge.src) + "-" + std::to_string(edge.dst));
    }
  }
}

std::vector<double> flatten_gammas(const ArchParams& arch) {
  std::vector<double> out;
  auto add = [&](const CellArch& c) {
    for (const Tensor& g : c.gamma) out.insert(out.end(), g.data().begin(), g.data().end());
  };
  add(arch.normal);
  if (arch.reduce) add(*arch.reduce);
  return out;
}

void set_requires_grad(const std::vector<Tensor>& ts, bool flag) {
  for (const Tensor& t : ts) t.set_requires_grad(flag);
}

double accuracy_of(const Tensor& logits, const std::vector<int>& labels) {
  const Index n = logits.dim(0), k = logits.dim(1);
  int correct = 0;
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    for (Index j = 1; j < k; ++j) {
      if (logits[i * k + j] > logits[i * k + best]) best = j;
    }
    correct += best == labels[std::size_t(i)];
  }
  return double(correct) / double(n);
}

double row_sum_error(const ArchParams& arch) {
  double worst = 0.0;
  for (const Tensor& a : arch.alphas()) {
    const Eigen::MatrixXd b = beta_table(a);
    worst = std::max(worst, (b.rowwise().sum().array() - 1.0).abs().maxCoeff());
  }
  return worst;
}

[[noreturn]] void diverged(const std::string& phase, int epoch, std::uint64_t step) {
  Tape::active().clear();
  throw DivergenceError(phase + " loss is not finite at epoch " + std::to_string(epoch) + ", step " +
                        std::to_string(step));
}

}  // namespace

SearchState init_search(const SearchConfig& config) {
  config.validate();
  SearchState s;
  s.config = config;
  s.topology = make_topology(config.space);
  std::optional<PartialChannelConfig> pc;
  if (config.partial_channel_k > 0) pc = PartialChannelConfig{config.partial_channel_k};
  s.net = build_supernet(s.topology, config.stack, config.seed, pc);
  if (s.config.regularizer.flops_weight > 0.0 && s.config.regularizer.costs.empty()) {
    s.config.regularizer.costs = candidate_costs(s.topology, config.stack);
  }
  s.arch = init_arch_params(config.alpha_init, s.topology, s.net.has_reduce(), config.edge_weights, config.seed);
  Adam::Options ao = config.alpha_optimizer;
  ao.weight_decay = config.effective_alpha_weight_decay();
  s.alpha_opt.emplace(s.arch.tensors(), ao);
  s.weight_opt.emplace(s.net.parameters(), config.weight_optimizer);
  s.data_rng = Rng(config.seed + 1);

  append_columns(s.trace.alpha_columns, "normal", s.topology);
  if (s.arch.reduce) append_columns(s.trace.alpha_columns, "reduce", s.topology);
  append_gamma_columns(s.trace.gamma_columns, "normal", s.topology, s.arch.normal);
  if (s.arch.reduce) append_gamma_columns(s.trace.gamma_columns, "reduce", s.topology, *s.arch.reduce);
  return s;
}

void search_epoch(SearchState& s, const SearchData& d) {
  const SearchConfig& cfg = s.config;
  const Dataset& data = d.train.dataset();
  if (data.num_classes != cfg.stack.num_classes || data.image_size != cfg.stack.image_size ||
      data.channels != cfg.stack.in_channels) {
    throw ContractError("search: dataset geometry does not match the network stack");
  }
  const int epoch = s.epoch;
  const bool warm = epoch < cfg.warmup_epochs;
  const std::vector<Tensor> weights = s.net.parameters();
  const std::vector<Tensor> arch_tensors = s.arch.tensors();

  EpochRecord rec;
  rec.epoch = epoch;
  rec.lambda = cfg.regularizer.schedule.at(epoch);
  rec.weight_lr = cosine_lr(cfg.weight_lr, epoch, std::max(cfg.epochs, 1));
  const auto train_batches = shuffled_batches(d.train.size(), cfg.batch_size, s.data_rng);
  const auto val_batches = shuffled_batches(d.val.size(), cfg.batch_size, s.data_rng);

  double train_loss = 0.0, train_acc = 0.0, val_loss = 0.0, val_acc = 0.0, reg_sum = 0.0;
  int alpha_steps = 0;
  for (std::size_t i = 0; i < train_batches.size(); ++i) {
    if (!warm) {
      const long tr0 = d.train.reads(), va0 = d.val.reads();
      const Batch vb = d.val.batch(val_batches[i % val_batches.size()]);
      set_requires_grad(weights, false);
      set_requires_grad(arch_tensors, true);
      Rng channels(cfg.seed ^ s.step);
      const Tensor logits = s.net.forward(vb.x, {&s.arch, &channels, nullptr});
      const Tensor ce = cross_entropy(logits, vb.labels);
      const Tensor reg = regularizer_loss(cfg.regularizer, s.arch, epoch);
      const Tensor total = reg.defined() ? add(ce, reg) : ce;
      if (!std::isfinite(total.item())) diverged("architecture", epoch, s.step);
      s.alpha_opt->zero_grad();
      backward(total);
      s.alpha_opt->step();
      ++s.step;
      val_loss += ce.item();
      val_acc += accuracy_of(logits, vb.labels);
      reg_sum += reg.defined() ? reg.item() : 0.0;
      ++alpha_steps;
      rec.max_row_sum_error = std::max(rec.max_row_sum_error, row_sum_error(s.arch));
      rec.alpha_train_reads += d.train.reads() - tr0;
      rec.alpha_val_reads += d.val.reads() - va0;
    }

    const long tr0 = d.train.reads(), va0 = d.val.reads();
    const Batch tb = d.train.batch(train_batches[i]);
    set_requires_grad(weights, true);
    set_requires_grad(arch_tensors, false);
    Rng channels(cfg.seed ^ s.step);
    const Tensor logits = s.net.forward(tb.x, {&s.arch, &channels, nullptr});
    const Tensor ce = cross_entropy(logits, tb.labels);
    if (!std::isfinite(ce.item())) diverged("weight", epoch, s.step);
    s.weight_opt->zero_grad();
    backward(ce);
    clip_grad_norm(weights, cfg.grad_clip);
    rec.max_clipped_norm = std::max(rec.max_clipped_norm, grad_norm(weights));
    s.weight_opt->step(rec.weight_lr);
    ++s.step;
    train_loss += ce.item();
    train_acc += accuracy_of(logits, tb.labels);
    rec.weight_train_reads += d.train.reads() - tr0;
    rec.weight_val_reads += d.val.reads() - va0;
  }
  set_requires_grad(arch_tensors, true);

  const double nb = double(train_batches.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rec.train_loss = train_loss / nb;
  rec.train_accuracy = train_acc / nb;
  rec.val_loss = alpha_steps ? val_loss / alpha_steps : nan;
  rec.val_accuracy = alpha_steps ? val_acc / alpha_steps : nan;
  rec.reg_loss = alpha_steps ? reg_sum / alpha_steps : 0.0;
  rec.alpha = alpha_stats(s.arch);
  rec.min_gap = dispersion_report(s.arch).min_gap;
  rec.skip_fraction = skip_fraction(s.arch, s.topology);
  rec.genotype = derive(s.arch, s.topology, cfg.selection).canonical();
  rec.alphas = flatten_alphas(s.arch);
  rec.gammas = flatten_gammas(s.arch);
  s.trace.epochs.push_back(std::move(rec));
  ++s.epoch;
}

SearchResult continue_search(SearchState& state, const SearchData& data, const EpochCallback& on_epoch) {
  while (state.epoch < state.config.epochs) {
    search_epoch(state, data);
    if (on_epoch) on_epoch(state);
  }
  return {derive(state.arch, state.topology, state.config.selection), state.trace};
}

SearchResult run_search(const SearchConfig& config, const SearchData& data, const EpochCallback& on_epoch) {
  SearchState state = init_search(config);
  return continue_search(state, data, on_epoch);
}

namespace {

const std::vector<std::string>& scalar_columns() {
  static const std::vector<std::string> cols{
      "epoch",          "lambda",           "weight_lr",         "train_loss",        "train_accuracy",
      "val_loss",       "val_accuracy",     "reg_loss",          "alpha_mean",        "alpha_median",
      "alpha_std",      "min_gap",          "skip_fraction",     "alpha_train_reads", "alpha_val_reads",
      "weight_train_reads", "weight_val_reads", "max_clipped_norm", "max_row_sum_error", "genotype"};
  return cols;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& column) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw SchemaError("trace csv: bad number '" + s + "' in column " + column);
  return v;
}

}  // namespace

std::string trace_to_csv(const SearchTrace& trace) {
  std::ostringstream os;
  std::vector<std::string> header = scalar_columns();
  header.insert(header.end(), trace.alpha_columns.begin(), trace.alpha_columns.end());
  header.insert(header.end(), trace.gamma_columns.begin(), trace.gamma_columns.end());
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const EpochRecord& r : trace.epochs) {
    os << r.epoch << ',' << fmt(r.lambda) << ',' << fmt(r.weight_lr) << ',' << fmt(r.train_loss) << ','
       << fmt(r.train_accuracy) << ',' << fmt(r.val_loss) << ',' << fmt(r.val_accuracy) << ',' << fmt(r.reg_loss)
       << ',' << fmt(r.alpha.mean) << ',' << fmt(r.alpha.median) << ',' << fmt(r.alpha.std) << ','
       << fmt(r.min_gap) << ',' << fmt(r.skip_fraction) << ',' << r.alpha_train_reads << ',' << r.alpha_val_reads
       << ',' << r.weight_train_reads << ',' << r.weight_val_reads << ',' << fmt(r.max_clipped_norm) << ','
       << fmt(r.max_row_sum_error) << ',' << r.genotype;
    for (double v : r.alphas) os << ',' << fmt(v);
    for (double v : r.gammas) os << ',' << fmt(v);
    os << '\n';
  }
  return os.str();
}

SearchTrace trace_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw SchemaError("trace csv: empty input");
  const std::vector<std::string> header = split_line(line);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < header.size(); ++i) pos[header[i]] = i;
  std::string missing;
  for (const std::string& c : scalar_columns()) {
    if (!pos.count(c)) missing += (missing.empty() ? "" : ", ") + c;
  }
  if (!missing.empty()) throw SchemaError("trace csv: missing column(s): " + missing);

  SearchTrace trace;
  std::vector<std::size_t> alpha_pos, gamma_pos;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].rfind("alpha.", 0) == 0) {
      trace.alpha_columns.push_back(header[i]);
      alpha_pos.push_back(i);
    } else if (header[i].rfind("gamma.", 0) == 0) {
      trace.gamma_columns.push_back(header[i]);
      gamma_pos.push_back(i);
    }
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) throw SchemaError("trace csv: row has the wrong number of cells");
    auto num = [&](const std::string& c) { return parse_double(cells[pos.at(c)], c); };
    EpochRecord r;
    r.epoch = int(num("epoch"));
    r.lambda = num("lambda");
    r.weight_lr = num("weight_lr");
    r.train_loss = num("train_loss");
    r.train_accuracy = num("train_accuracy");
    r.val_loss = num("val_loss");
    r.val_accuracy = num("val_accuracy");
    r.reg_loss = num("reg_loss");
    r.alpha = {num("alpha_mean"), num("alpha_median"), num("alpha_std")};
    r.min_gap = num("min_gap");
    r.skip_fraction = num("skip_fraction");
    r.alpha_train_reads = long(num("alpha_train_reads"));
    r.alpha_val_reads = long(num("alpha_val_reads"));
    r.weight_train_reads = long(num("weight_train_reads"));
    r.weight_val_reads = long(num("weight_val_reads"));
    r.max_clipped_norm = num("max_clipped_norm");
    r.max_row_sum_error = num("max_row_sum_error");
    r.genotype = cells[pos.at("genotype")];
    for (std::size_t i = 0; i < alpha_pos.size(); ++i) r.alphas.push_back(parse_double(cells[alpha_pos[i]], header[alpha_pos[i]]));
    for (std::size_t i = 0; i < gamma_pos.size(); ++i) r.gammas.push_back(parse_double(cells[gamma_pos[i]], header[gamma_pos[i]]));
    trace.epochs.push_back(std::move(r));
  }
  return trace;
}

namespace {

constexpr const char* kCheckpointFormat = "sadarts-search-checkpoint";
constexpr int kCheckpointVersion = 1;

Json arrays_to_json(const std::vector<Array>& arrays) {
  Json out = Json::array();
  for (const Array& a : arrays) out.push_back(std::vector<double>(a.begin(), a.end()));
  return out;
}

Json tensors_to_json(const std::vector<Tensor>& ts) {
  Json out = Json::array();
  for (const Tensor& t : ts) out.push_back(std::vector<double>(t.data().begin(), t.data().end()));
  return out;
}

Array array_from_json(const Json& j, Index expected, const std::string& what) {
  const auto v = j.get<std::vector<double>>();
  if (Index(v.size()) != expected) throw IntegrityError("checkpoint: " + what + " has the wrong size");
  return Array::Map(v.data(), Index(v.size()));
}

void load_tensors(const Json& j, const std::vector<Tensor>& ts, const std::string& what) {
  if (!j.is_array() || j.size() != ts.size()) throw IntegrityError("checkpoint: " + what + " count mismatch");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const_cast<Tensor&>(ts[i]).data() = array_from_json(j[i], ts[i].numel(), what);
  }
}

std::vector<Array> load_arrays(const Json& j, const std::vector<Tensor>& like, const std::string& what) {
  if (!j.is_array() || j.size() != like.size()) throw IntegrityError("checkpoint: " + what + " count mismatch");
  std::vector<Array> out;
  for (std::size_t i = 0; i < like.size(); ++i) out.push_back(array_from_json(j[i], like[i].numel(), what));
  return out;
}

}  // namespace

std::string checkpoint_to_json(const SearchState& s) {
  Json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = to_json(s.config);
  j["epoch"] = s.epoch;
  j["step"] = s.step;
  j["data_rng"] = rng_state(s.data_rng);
  j["weights"] = tensors_to_json(s.net.parameters());
  j["arch"] = tensors_to_json(s.arch.tensors());
  j["adam"] = {{"steps", s.alpha_opt->steps}, {"m", arrays_to_json(s.alpha_opt->m)}, {"v", arrays_to_json(s.alpha_opt->v)}};
  j["sgd"] = {{"buffers", arrays_to_json(s.weight_opt->buffers)}, {"started", s.weight_opt->started}};
  j["trace"] = trace_to_csv(s.trace);
  return j.dump();
}

SearchState checkpoint_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("checkpoint: not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) throw SchemaError("checkpoint: unknown format");
  if (j.value("version", -1) != kCheckpointVersion) throw SchemaError("checkpoint: unsupported version");
  try {
    SearchState s = init_search(search_config_from_json(j.at("config")));
    s.epoch = j.at("epoch").get<int>();
    s.step = j.at("step").get<std::uint64_t>();
    s.data_rng = rng_from_state(j.at("data_rng").get<std::string>());
    const std::vector<Tensor> weights = s.net.parameters();
    const std::vector<Tensor> arch = s.arch.tensors();
    load_tensors(j.at("weights"), weights, "weights");
    load_tensors(j.at("arch"), arch, "architecture");
    s.alpha_opt->steps = j.at("adam").at("steps").get<long>();
    s.alpha_opt->m = load_arrays(j.at("adam").at("m"), arch, "adam m");
    s.alpha_opt->v = load_arrays(j.at("adam").at("v"), arch, "adam v");
    s.weight_opt->buffers = load_arrays(j.at("sgd").at("buffers"), weights, "sgd buffers");
    s.weight_opt->started = j.at("sgd").at("started").get<std::vector<bool>>();
    const auto cols_a = s.trace.alpha_columns, cols_g = s.trace.gamma_columns;
    s.trace = trace_from_csv(j.at("trace").get<std::string>());
    if (s.trace.alpha_columns != cols_a || s.trace.gamma_columns != cols_g) {
      throw IntegrityError("checkpoint: trace columns do not match the configuration");
    }
    return s;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace sadarts
