#include "sadarts/harness.hpp"

#include "sadarts/digest.hpp"
#include "sadarts/errors.hpp"
#include "sadarts/parallel.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace sadarts {

const std::string& engine_version() {
  static const std::string v = "sadarts 0.1.0";
  return v;
}

void RunConfig::validate() const {
  if (trials < 1) throw ContractError("run config: trials must be at least 1");
  search.validate();
  const StackSpec& st = search.stack;
  if (generator_classes(dataset.generator) != st.num_classes) {
    throw ContractError("run config: dataset '" + dataset.generator + "' has " +
                        std::to_string(generator_classes(dataset.generator)) + " classes but the stack expects " +
                        std::to_string(st.num_classes));
  }
  if (dataset.image_size != st.image_size) throw ContractError("run config: dataset and stack image sizes differ");
  if (st.in_channels != 1) throw ContractError("run config: the generators produce single-channel images");
  if (dataset.samples < 4) throw ContractError("run config: need at least 4 samples");
}

Json to_json(const RunConfig& c) {
  return {{"schema_version", kRunSchemaVersion},
          {"dataset", to_json(c.dataset)},
          {"search", to_json(c.search)},
          {"recipe", c.recipe.empty() ? Json(nullptr) : Json(c.recipe)},
          {"output_dir", c.output_dir},
          {"trials", c.trials}};
}

RunConfig run_config_from_json(const Json& j) {
  JsonFields f(j, "run config");
  const int version = f.require<int>("schema_version");
  if (version != kRunSchemaVersion) f.fail("unsupported schema_version " + std::to_string(version));
  RunConfig c;
  if (f.has("dataset")) c.dataset = dataset_from_json(f.at("dataset"));
  if (f.has("search")) c.search = search_config_from_json(f.at("search"));
  c.recipe = f.get<std::string>("recipe", "");
  if (!c.recipe.empty()) {
    const auto& names = recipe_names();
    if (std::find(names.begin(), names.end(), c.recipe) == names.end()) f.fail("unknown recipe '" + c.recipe + "'");
  }
  c.output_dir = f.get<std::string>("output_dir", "");
  c.trials = f.get<int>("trials", 1);
  f.finish();
  return c;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw SchemaError(path.string() + ": not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

fs::path default_output_root() {
  const char* env = std::getenv("SADARTS_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

// ---- artifacts ------------------------------------------------------------

namespace {

const char* kManifest = "manifest.json";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json read_manifest(const fs::path& dir) {
  if (!fs::exists(dir / kManifest)) throw IntegrityError(dir.string() + ": no manifest");
  try {
    return Json::parse(read_text(dir / kManifest));
  } catch (const Json::exception& e) {
    throw IntegrityError(dir.string() + ": unreadable manifest: " + e.what());
  }
}

void write_manifest(const fs::path& dir, const std::map<std::string, std::string>& files) {
  Json listed = Json::object();
  for (const auto& [name, hash] : files) listed[name] = hash;
  const Json m{{"format", "sadarts-run-manifest"},
               {"version", 1},
               {"engine_version", engine_version()},
               {"lineage", files.at("config.json")},
               {"files", listed}};
  write_text(dir / kManifest, m.dump(2) + "\n");
}

std::string dispersion_csv(const ArchParams& arch, const CellTopology& topo) {
  const DispersionReport rep = dispersion_report(arch);
  const auto searchable = topo.searchable_edges();
  std::ostringstream os;
  os << "table,row,edge,gap";
  for (std::size_t k = 0; k < topo.candidates.size(); ++k) os << ",beta_" << k + 1;
  os << '\n';
  for (const EdgeDispersion& e : rep.edges) {
    const CellEdge& edge = topo.edges[std::size_t(searchable[std::size_t(e.row)])];
    os << e.table << ',' << e.row << ',' << edge.src << '-' << edge.dst << ',' << fmt(e.gap);
    for (double b : e.sorted_beta) os << ',' << fmt(b);
    os << '\n';
  }
  return os.str();
}

Json run_summary(const SearchState& state, const Genotype& g, const std::optional<std::string>& failure) {
  const DispersionReport rep = dispersion_report(state.arch);
  const AlphaStats st = alpha_stats(state.arch);
  Json final_metrics{{"skip_fraction", skip_fraction(state.arch, state.topology)},
                     {"min_gap", rep.min_gap},
                     {"alpha_mean", st.mean},
                     {"alpha_median", st.median},
                     {"alpha_std", st.std}};
  if (!state.trace.epochs.empty()) {
    const EpochRecord& last = state.trace.epochs.back();
    final_metrics["train_loss"] = last.train_loss;
    final_metrics["train_accuracy"] = last.train_accuracy;
    final_metrics["val_loss"] = std::isfinite(last.val_loss) ? Json(last.val_loss) : Json(nullptr);
    final_metrics["val_accuracy"] = std::isfinite(last.val_accuracy) ? Json(last.val_accuracy) : Json(nullptr);
  }
  const EdgeDispersion& worst = rep.edges[rep.worst_edge];
  return {{"genotype", g.canonical()},
          {"epochs_completed", state.epoch},
          {"final", final_metrics},
          {"worst_edge", {{"table", worst.table}, {"row", worst.row}, {"gap", worst.gap}}},
          {"alpha_std_convention", "population"},
          {"failure", failure ? Json(*failure) : Json(nullptr)},
          {"engine_version", engine_version()}};
}

}  // namespace

RunArtifact run_single(const RunConfig& cfg, const fs::path& dir) {
  if (cfg.trials != 1) throw ContractError("run_single: expects a single trial");
  cfg.validate();
  fs::create_directories(dir);
  RunConfig stored = cfg;
  stored.output_dir.clear();
  const std::string config_text = to_json(stored).dump(2) + "\n";

  const SearchData data = make_search_data(make_dataset(cfg.dataset), cfg.search.train_fraction, cfg.search.seed);
  SearchState state = init_search(cfg.search);
  RunArtifact art;
  art.dir = dir;
  try {
    art.genotype = continue_search(state, data).genotype;
  } catch (const DivergenceError& e) {
    art.failure = e.what();
    art.genotype = derive(state.arch, state.topology, state.config.selection);
  }
  art.trace = state.trace;

  std::map<std::string, std::string> files{
      {"config.json", config_text},
      {"trace.csv", trace_to_csv(state.trace)},
      {"genotype.json", genotype_to_json(art.genotype) + "\n"},
      {"checkpoint.json", checkpoint_to_json(state)},
      {"dispersion.csv", dispersion_csv(state.arch, state.topology)},
      {"summary.json", run_summary(state, art.genotype, art.failure).dump(2) + "\n"},
  };
  std::map<std::string, std::string> hashes;
  for (const auto& [name, text] : files) {
    write_text(dir / name, text);
    hashes[name] = sha256_hex(text);
  }
  write_manifest(dir, hashes);
  art.lineage = hashes.at("config.json");
  return art;
}

std::vector<RunArtifact> run_trials(const RunConfig& cfg, const fs::path& dir, int jobs) {
  cfg.validate();
  std::vector<RunArtifact> out(std::size_t(cfg.trials));
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    RunConfig one = cfg;
    one.trials = 1;
    one.search.seed = cfg.search.seed + i;
    char name[32];
    std::snprintf(name, sizeof name, "trial-%03zu", i);
    out[i] = run_single(one, dir / name);
  });
  return out;
}

void verify_artifact(const fs::path& dir) {
  const Json m = read_manifest(dir);
  if (m.value("format", "") != "sadarts-run-manifest") throw IntegrityError(dir.string() + ": not a run manifest");
  const Json& files = m.at("files");
  for (auto it = files.begin(); it != files.end(); ++it) {
    const fs::path p = dir / it.key();
    if (!fs::exists(p)) throw IntegrityError(dir.string() + ": missing " + it.key());
    if (sha256_file(p) != it.value().get<std::string>()) {
      throw IntegrityError(dir.string() + ": " + it.key() + " does not match its manifest hash");
    }
  }
  if (!files.contains("config.json") || m.at("lineage") != files.at("config.json")) {
    throw IntegrityError(dir.string() + ": lineage id does not match config.json");
  }
}

void add_artifact_file(const fs::path& dir, const std::string& name, const std::string& content) {
  const Json m = read_manifest(dir);
  std::map<std::string, std::string> files;
  for (auto it = m.at("files").begin(); it != m.at("files").end(); ++it) files[it.key()] = it.value();
  write_text(dir / name, content);
  files[name] = sha256_hex(content);
  write_manifest(dir, files);
}

RunConfig artifact_config(const fs::path& dir) {
  try {
    return run_config_from_json(Json::parse(read_text(dir / "config.json")));
  } catch (const Json::exception& e) {
    throw IntegrityError(dir.string() + ": unreadable config.json: " + e.what());
  }
}

SearchState artifact_state(const fs::path& dir) { return checkpoint_from_json(read_text(dir / "checkpoint.json")); }

Genotype derive_artifact(const fs::path& dir) {
  verify_artifact(dir);
  const SearchState state = artifact_state(dir);
  const Genotype g = derive(state.arch, state.topology, state.config.selection);
  const Genotype stored = genotype_from_json(read_text(dir / "genotype.json"));
  if (g.canonical() != stored.canonical()) {
    throw IntegrityError(dir.string() + ": stored genotype " + stored.canonical() + " differs from re-derived " +
                         g.canonical());
  }
  return g;
}

TrainConfig eval_train_config(const RunConfig& cfg, int steps) {
  TrainConfig t;
  t.dataset = cfg.dataset;
  t.stack = cfg.search.stack;
  t.train_fraction = cfg.search.train_fraction;
  t.split_seed = cfg.search.seed;
  t.steps = steps;
  t.batch_size = cfg.search.batch_size;
  t.lr = cfg.search.weight_lr;
  t.sgd = cfg.search.weight_optimizer;
  t.grad_clip = cfg.search.grad_clip;
  return t;
}

EvalReport eval_artifact(const fs::path& dir, std::uint64_t seed, int steps) {
  EvalReport r;
  r.genotype = derive_artifact(dir);
  const RunConfig cfg = artifact_config(dir);
  const SearchState state = artifact_state(dir);
  const TrainConfig tc = eval_train_config(cfg, steps);
  const SearchData data = make_search_data(make_dataset(tc.dataset), tc.train_fraction, tc.split_seed);
  r.retrained = train_discrete(r.genotype, state.topology, tc, seed, data);
  r.discrepancy = discrepancy_gap(state.net, state.arch, r.genotype, data.val.all());
  return r;
}

Json to_json(const EvalReport& r) {
  auto metrics = [](const EvalMetrics& m) { return Json{{"loss", m.loss}, {"accuracy", m.accuracy}}; };
  return {{"genotype", r.genotype.canonical()},
          {"retrained", {{"val_accuracy", r.retrained.val_accuracy},
                         {"val_loss", r.retrained.val_loss},
                         {"param_count", r.retrained.param_count}}},
          {"discrepancy", {{"supernet", metrics(r.discrepancy.supernet)},
                           {"discrete", metrics(r.discrepancy.discrete)},
                           {"loss_gap", r.discrepancy.loss_gap},
                           {"accuracy_gap", r.discrepancy.accuracy_gap}}}};
}

// ---- plot data --------------------------------------------------------------

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return int(i);
  }
  return -1;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<int> require_columns(const CsvTable& t, const std::vector<std::string>& names, const std::string& what) {
  std::vector<int> idx;
  std::string missing;
  for (const std::string& n : names) {
    idx.push_back(t.column(n));
    if (idx.back() < 0) missing += (missing.empty() ? "" : ", ") + n;
  }
  if (!missing.empty()) throw SchemaError(what + ": missing column(s): " + missing);
  return idx;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) return t;
  t.header = split_csv_line(line);
  while (std::getline(is, line)) {
    if (!line.empty()) t.rows.push_back(split_csv_line(line));
  }
  return t;
}

const std::vector<std::string>& figure_names() {
  static const std::vector<std::string> names{"beta-trace", "alpha-stats", "landscape"};
  return names;
}

std::string plot_data(const fs::path& dir, const std::string& figure, const std::string& table, int edge_row) {
  const auto& figs = figure_names();
  if (std::find(figs.begin(), figs.end(), figure) == figs.end()) throw LookupError("unknown figure '" + figure + "'");
  std::ostringstream os;
  os << "figure,series,x,y,value\n";

  if (figure == "landscape") {
    if (!fs::exists(dir / "landscape.csv")) throw SchemaError(dir.string() + ": no landscape.csv in this run");
    const CsvTable t = parse_csv(read_text(dir / "landscape.csv"));
    const auto c = require_columns(t, {"a", "b", "loss", "accuracy"}, "landscape.csv");
    for (const auto& r : t.rows) {
      os << "landscape,loss," << r[std::size_t(c[0])] << ',' << r[std::size_t(c[1])] << ',' << r[std::size_t(c[2])] << '\n';
      os << "landscape,accuracy," << r[std::size_t(c[0])] << ',' << r[std::size_t(c[1])] << ','
         << r[std::size_t(c[3])] << '\n';
    }
    return os.str();
  }

  const CsvTable t = parse_csv(read_text(dir / "trace.csv"));
  if (figure == "alpha-stats") {
    const auto c = require_columns(t, {"epoch", "alpha_mean", "alpha_median", "alpha_std"}, "trace.csv");
    const char* series[] = {"mean", "median", "std"};
    for (int s = 0; s < 3; ++s) {
      for (const auto& r : t.rows) {
        os << "alpha-stats," << series[s] << ',' << r[std::size_t(c[0])] << ",," << r[std::size_t(c[std::size_t(s) + 1])]
           << '\n';
      }
    }
    return os.str();
  }

  // beta-trace
  const RunConfig cfg = artifact_config(dir);
  const CellTopology topo = make_topology(cfg.search.space);
  const auto searchable = topo.searchable_edges();
  if (edge_row < 0 || edge_row >= int(searchable.size())) {
    throw LookupError("edge row " + std::to_string(edge_row) + " is outside 0.." + std::to_string(searchable.size() - 1));
  }
  const CellEdge& e = topo.edges[std::size_t(searchable[std::size_t(edge_row)])];
  std::vector<std::string> cols{"epoch"};
  for (const std::string& op : topo.candidates) {
    cols.push_back("alpha." + table + "." + std::to_string(e.src) + "-" + std::to_string(e.dst) + "." + op);
  }
  const auto c = require_columns(t, cols, "trace.csv");
  const Index k = Index(topo.candidates.size());
  std::vector<Eigen::VectorXd> betas;
  for (const auto& r : t.rows) {
    Eigen::VectorXd a(k);
    for (Index i = 0; i < k; ++i) a[i] = std::stod(r[std::size_t(c[std::size_t(i) + 1])]);
    betas.push_back(beta_of(a));
  }
  for (Index i = 0; i < k; ++i) {
    for (std::size_t row = 0; row < t.rows.size(); ++row) {
      os << "beta-trace," << topo.candidates[std::size_t(i)] << ',' << t.rows[row][std::size_t(c[0])] << ",,"
         << fmt(betas[row][i]) << '\n';
    }
  }
  return os.str();
}

// ---- oracle documents -------------------------------------------------------

OracleConfig oracle_config_from_json(const Json& j) {
  JsonFields f(j, "oracle config");
  const int version = f.require<int>("schema_version");
  if (version != kRunSchemaVersion) f.fail("unsupported schema_version " + std::to_string(version));
  OracleConfig c = default_oracle_config();
  c.space = f.get<std::string>("space", c.space);
  if (f.has("train")) c.train = train_config_from_json(f.at("train"));
  c.seeds = f.get<std::vector<std::uint64_t>>("seeds", c.seeds);
  f.finish();
  return c;
}

Json to_json(const OracleConfig& c) {
  return {{"schema_version", kRunSchemaVersion}, {"space", c.space}, {"train", to_json(c.train)}, {"seeds", c.seeds}};
}

OracleConfig default_oracle_config() {
  OracleConfig c;
  c.space = "micro";
  c.train.dataset.generator = "bars";
  c.train.dataset.samples = 256;
  c.train.stack.num_classes = 4;
  c.train.stack.channels = 8;
  c.train.steps = 300;
  c.seeds = {0, 1, 2};
  return c;
}

}  // namespace sadarts
