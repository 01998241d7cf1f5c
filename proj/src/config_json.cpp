#include "sadarts/config_json.hpp"

#include "sadarts/errors.hpp"

namespace sadarts {

JsonFields::JsonFields(const Json& object, std::string where) : object_(object), where_(std::move(where)) {
  if (!object_.is_object()) fail("expected an object");
}

bool JsonFields::has(const std::string& key) const { return object_.contains(key) && !object_.at(key).is_null(); }

const Json& JsonFields::at(const std::string& key) {
  used_.insert(key);
  if (!object_.contains(key)) fail("missing field '" + key + "'");
  return object_.at(key);
}

void JsonFields::finish() const {
  std::string unknown;
  for (auto it = object_.begin(); it != object_.end(); ++it) {
    if (!used_.count(it.key())) unknown += (unknown.empty() ? "" : ", ") + it.key();
  }
  if (!unknown.empty()) fail("unknown field(s): " + unknown);
}

void JsonFields::fail(const std::string& message) const { throw SchemaError(where_ + ": " + message); }

Json to_json(const StackSpec& s) {
  return {{"in_channels", s.in_channels}, {"image_size", s.image_size},         {"channels", s.channels},
          {"cells", s.num_cells},         {"reduction_cells", s.reduction_cells}, {"classes", s.num_classes},
          {"stem_kernel", s.stem_kernel}};
}

StackSpec stack_from_json(const Json& j) {
  JsonFields f(j, "stack");
  StackSpec s;
  s.in_channels = f.get<Index>("in_channels", s.in_channels);
  s.image_size = f.get<Index>("image_size", s.image_size);
  s.channels = f.get<Index>("channels", s.channels);
  s.num_cells = f.get<int>("cells", s.num_cells);
  s.reduction_cells = f.get<std::vector<int>>("reduction_cells", s.reduction_cells);
  s.num_classes = f.get<int>("classes", s.num_classes);
  s.stem_kernel = f.get<Index>("stem_kernel", s.stem_kernel);
  f.finish();
  return s;
}

Json to_json(const DatasetSpec& s) {
  return {{"generator", s.generator}, {"samples", s.samples}, {"image_size", s.image_size},
          {"seed", s.seed},           {"noise", s.noise},     {"cue", s.cue}};
}

DatasetSpec dataset_from_json(const Json& j) {
  JsonFields f(j, "dataset");
  DatasetSpec s;
  s.generator = f.get<std::string>("generator", s.generator);
  s.samples = f.get<Index>("samples", s.samples);
  s.image_size = f.get<Index>("image_size", s.image_size);
  s.seed = f.get<std::uint64_t>("seed", s.seed);
  s.noise = f.get<double>("noise", s.noise);
  s.cue = f.get<double>("cue", s.cue);
  f.finish();
  return s;
}

namespace {

Json to_json(const LambdaSchedule& s) {
  return {{"kind", s.kind == LambdaSchedule::Kind::linear ? "linear" : "constant"},
          {"divisor", s.divisor},
          {"value", s.value},
          {"zero_before", s.zero_before}};
}

LambdaSchedule schedule_from_json(const Json& j) {
  JsonFields f(j, "regularizer.schedule");
  LambdaSchedule s;
  const std::string kind = f.get<std::string>("kind", "linear");
  if (kind == "linear") {
    s.kind = LambdaSchedule::Kind::linear;
  } else if (kind == "constant") {
    s.kind = LambdaSchedule::Kind::constant;
  } else {
    f.fail("unknown schedule kind '" + kind + "'");
  }
  s.divisor = f.get<double>("divisor", s.divisor);
  s.value = f.get<double>("value", s.value);
  s.zero_before = f.get<int>("zero_before", s.zero_before);
  f.finish();
  return s;
}

}  // namespace

Json to_json(const RegularizerSpec& s) {
  return {{"kind", regularizer_name(s.kind)},
          {"schedule", to_json(s.schedule)},
          {"nu", s.nu},
          {"mu", s.mu},
          {"flops_weight", s.flops_weight}};
}

RegularizerSpec regularizer_from_json(const Json& j) {
  JsonFields f(j, "regularizer");
  RegularizerSpec s;
  s.kind = regularizer_kind(f.get<std::string>("kind", "none"));
  if (f.has("schedule")) s.schedule = schedule_from_json(f.at("schedule"));
  s.nu = f.get<double>("nu", s.nu);
  s.mu = f.get<double>("mu", s.mu);
  s.flops_weight = f.get<double>("flops_weight", s.flops_weight);
  f.finish();
  if (s.nu < 0.0 || s.nu > 1.0) throw SchemaError("regularizer: nu must lie in [0, 1]");
  if (s.mu < 0.0) throw SchemaError("regularizer: mu must be nonnegative");
  if (s.flops_weight < 0.0) throw SchemaError("regularizer: flops_weight must be nonnegative");
  return s;
}

Json to_json(const SearchConfig& c) {
  Json alpha_init{{"strategy", strategy_name(c.alpha_init.strategy)},
                  {"scale", c.alpha_init.scale},
                  {"op", c.alpha_init.op},
                  {"delta", c.alpha_init.delta},
                  {"value", c.alpha_init.value}};
  Json alpha_opt{{"lr", c.alpha_optimizer.lr},
                 {"beta1", c.alpha_optimizer.beta1},
                 {"beta2", c.alpha_optimizer.beta2},
                 {"eps", c.alpha_optimizer.eps},
                 {"weight_decay", c.alpha_weight_decay ? Json(*c.alpha_weight_decay) : Json(nullptr)}};
  Json weight_opt{{"lr", c.weight_lr},
                  {"momentum", c.weight_optimizer.momentum},
                  {"weight_decay", c.weight_optimizer.weight_decay}};
  return {{"space", c.space},
          {"stack", to_json(c.stack)},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"batch_size", c.batch_size},
          {"train_fraction", c.train_fraction},
          {"alpha_optimizer", alpha_opt},
          {"weight_optimizer", weight_opt},
          {"grad_clip", c.grad_clip},
          {"alpha_init", alpha_init},
          {"partial_channel_k", c.partial_channel_k},
          {"edge_weights", c.edge_weights},
          {"regularizer", to_json(c.regularizer)},
          {"selection", c.selection == SelectionMode::softmax ? "softmax" : "raw"},
          {"seed", c.seed}};
}

SearchConfig search_config_from_json(const Json& j) {
  JsonFields f(j, "search");
  SearchConfig c;
  c.space = f.get<std::string>("space", c.space);
  if (f.has("stack")) c.stack = stack_from_json(f.at("stack"));
  c.epochs = f.get<int>("epochs", c.epochs);
  c.warmup_epochs = f.get<int>("warmup_epochs", c.warmup_epochs);
  c.batch_size = f.get<Index>("batch_size", c.batch_size);
  c.train_fraction = f.get<double>("train_fraction", c.train_fraction);
  if (f.has("alpha_optimizer")) {
    JsonFields a(f.at("alpha_optimizer"), "search.alpha_optimizer");
    c.alpha_optimizer.lr = a.get<double>("lr", c.alpha_optimizer.lr);
    c.alpha_optimizer.beta1 = a.get<double>("beta1", c.alpha_optimizer.beta1);
    c.alpha_optimizer.beta2 = a.get<double>("beta2", c.alpha_optimizer.beta2);
    c.alpha_optimizer.eps = a.get<double>("eps", c.alpha_optimizer.eps);
    if (a.has("weight_decay")) c.alpha_weight_decay = a.require<double>("weight_decay");
    a.get<double>("weight_decay", 0.0);
    a.finish();
  }
  if (f.has("weight_optimizer")) {
    JsonFields w(f.at("weight_optimizer"), "search.weight_optimizer");
    c.weight_lr = w.get<double>("lr", c.weight_lr);
    c.weight_optimizer.momentum = w.get<double>("momentum", c.weight_optimizer.momentum);
    c.weight_optimizer.weight_decay = w.get<double>("weight_decay", c.weight_optimizer.weight_decay);
    w.finish();
  }
  c.grad_clip = f.get<double>("grad_clip", c.grad_clip);
  if (f.has("alpha_init")) {
    JsonFields a(f.at("alpha_init"), "search.alpha_init");
    c.alpha_init.strategy = strategy_from_name(a.get<std::string>("strategy", "small_random"));
    c.alpha_init.scale = a.get<double>("scale", c.alpha_init.scale);
    c.alpha_init.op = a.get<std::string>("op", c.alpha_init.op);
    c.alpha_init.delta = a.get<double>("delta", c.alpha_init.delta);
    c.alpha_init.value = a.get<double>("value", c.alpha_init.value);
    a.finish();
  }
  c.partial_channel_k = f.get<int>("partial_channel_k", c.partial_channel_k);
  c.edge_weights = f.get<bool>("edge_weights", c.edge_weights);
  if (f.has("regularizer")) c.regularizer = regularizer_from_json(f.at("regularizer"));
  const std::string selection = f.get<std::string>("selection", "softmax");
  if (selection == "softmax") {
    c.selection = SelectionMode::softmax;
  } else if (selection == "raw") {
    c.selection = SelectionMode::raw;
  } else {
    f.fail("unknown selection mode '" + selection + "'");
  }
  c.seed = f.get<std::uint64_t>("seed", c.seed);
  f.finish();
  return c;
}

Json to_json(const TrainConfig& c) {
  return {{"dataset", to_json(c.dataset)},
          {"stack", to_json(c.stack)},
          {"train_fraction", c.train_fraction},
          {"split_seed", c.split_seed},
          {"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"momentum", c.sgd.momentum},
          {"weight_decay", c.sgd.weight_decay},
          {"grad_clip", c.grad_clip}};
}

TrainConfig train_config_from_json(const Json& j) {
  JsonFields f(j, "train");
  TrainConfig c;
  if (f.has("dataset")) c.dataset = dataset_from_json(f.at("dataset"));
  if (f.has("stack")) c.stack = stack_from_json(f.at("stack"));
  c.train_fraction = f.get<double>("train_fraction", c.train_fraction);
  c.split_seed = f.get<std::uint64_t>("split_seed", c.split_seed);
  c.steps = f.get<int>("steps", c.steps);
  c.batch_size = f.get<Index>("batch_size", c.batch_size);
  c.lr = f.get<double>("lr", c.lr);
  c.sgd.momentum = f.get<double>("momentum", c.sgd.momentum);
  c.sgd.weight_decay = f.get<double>("weight_decay", c.sgd.weight_decay);
  c.grad_clip = f.get<double>("grad_clip", c.grad_clip);
  f.finish();
  return c;
}

}  // namespace sadarts
