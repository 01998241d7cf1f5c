#include "sadarts/errors.hpp"
#include "sadarts/harness.hpp"
#include "sadarts/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace sadarts {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

RegularizerSpec l2_spec() {
  RegularizerSpec r;
  r.kind = RegularizerSpec::Kind::l2;
  r.schedule.kind = LambdaSchedule::Kind::constant;
  r.schedule.value = 5e-4;
  return r;
}

RegularizerSpec lse_spec() {
  RegularizerSpec r;
  r.kind = RegularizerSpec::Kind::lse;
  return r;
}

RegularizerSpec sa_spec(double nu, double mu) {
  RegularizerSpec r;
  r.kind = RegularizerSpec::Kind::sa;
  r.nu = nu;
  r.mu = mu;
  return r;
}

RunConfig with_regularizer(RunConfig c, const RegularizerSpec& r) {
  c.search.regularizer = r;
  // the L2 variant carries its penalty as a loss term, so no extra decay
  if (r.kind == RegularizerSpec::Kind::l2) c.search.alpha_weight_decay = 0.0;
  return c;
}

struct Variant {
  std::string name;
  RunConfig config;
};

constexpr double kInvSqrt2 = 0.7071067811865476;

std::vector<Variant> variants_of(const std::string& recipe, const RunConfig& base) {
  const RegularizerSpec sa = sa_spec(1.0, kInvSqrt2);
  if (recipe == "skip-dominance" || recipe == "landscape") {
    return {{"l2", with_regularizer(base, l2_spec())}, {"sa", with_regularizer(base, sa)}};
  }
  if (recipe == "unfair-init" || recipe == "dispersion" || recipe == "oracle-score") {
    return {{"l2", with_regularizer(base, l2_spec())},
            {"lse", with_regularizer(base, lse_spec())},
            {"sa", with_regularizer(base, sa)}};
  }
  if (recipe == "neg-init") {
    std::vector<Variant> out;
    for (double v : {-0.5, -1.0, -2.0, -5.0}) {
      RunConfig c = with_regularizer(base, l2_spec());
      c.search.alpha_init.strategy = AlphaInit::Strategy::constant_negative;
      c.search.alpha_init.value = v;
      char name[32];
      std::snprintf(name, sizeof name, "init%+.1f", v);
      out.push_back({name, c});
    }
    return out;
  }
  if (recipe == "hyperparam-grid") {
    return {{"nu1", with_regularizer(base, sa_spec(1.0, kInvSqrt2))},
            {"nu0.25-mu1e6", with_regularizer(base, sa_spec(0.25, 1e6))},
            {"nu0-mu0.707", with_regularizer(base, sa_spec(0.0, kInvSqrt2))}};
  }
  return {};
}

// Argmax of a row with `none` excluded, ties to the lowest index.
int row_argmax(std::span<const double> row, int none) {
  int best = -1;
  for (int c = 0; c < int(row.size()); ++c) {
    if (c == none) continue;
    if (best < 0 || row[std::size_t(c)] > row[std::size_t(best)]) best = c;
  }
  return best;
}

bool strictly_decreasing_after(const SearchTrace& t, int warmup) {
  // the first post-warm-up epoch is compared with the last warm-up epoch
  const int from = std::max(warmup, 1);
  if (int(t.epochs.size()) <= from) return false;
  for (std::size_t e = std::size_t(from); e < t.epochs.size(); ++e) {
    if (!(t.epochs[e].alpha.mean < t.epochs[e - 1].alpha.mean)) return false;
  }
  return true;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string csv_text(const CsvTable& t) {
  std::ostringstream os;
  for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
  os << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
  return os.str();
}

const RunArtifact* run_at(const RecipeCell& cell, std::size_t trial) {
  if (trial >= cell.runs.size() || !cell.failures[trial].empty()) return nullptr;
  return &cell.runs[trial];
}

// ---- per-recipe aggregation -------------------------------------------------

void aggregate_skip(RecipeReport& rep) {
  rep.table.header = {"cell", "trial", "status", "skip_fraction", "alpha_mean", "alpha_mean_decreasing",
                      "val_accuracy", "min_gap", "genotype"};
  for (RecipeCell& cell : rep.cells) {
    int dominated = 0, spared = 0, decreasing = 0, ok = 0;
    for (std::size_t i = 0; i < cell.runs.size(); ++i) {
      const RunArtifact* a = run_at(cell, i);
      if (!a) {
        rep.table.rows.push_back({cell.name, std::to_string(i), "failed: " + cell.failures[i], "", "", "", "", "", ""});
        continue;
      }
      const EpochRecord& last = a->trace.epochs.back();
      const bool dec = strictly_decreasing_after(a->trace, cell.config.search.warmup_epochs);
      ++ok;
      dominated += last.skip_fraction >= 2.0 / 3.0 - 1e-12;
      spared += last.skip_fraction <= 1.0 / 3.0 + 1e-12;
      decreasing += dec;
      rep.table.rows.push_back({cell.name, std::to_string(i), "ok", fmt(last.skip_fraction), fmt(last.alpha.mean),
                                dec ? "true" : "false", fmt(last.val_accuracy), fmt(last.min_gap), last.genotype});
    }
    rep.summary["cells"][cell.name] = {{"trials_ok", ok},
                                       {"skip_dominated", dominated},
                                       {"skip_at_most_third", spared},
                                       {"alpha_mean_decreasing", decreasing}};
  }
}

void aggregate_dispersion(RecipeReport& rep) {
  rep.table.header = {"cell", "trial", "status", "worst_edge_gap", "skip_fraction", "genotype"};
  for (RecipeCell& cell : rep.cells) {
    std::vector<DispersionReport> reports;
    for (std::size_t i = 0; i < cell.runs.size(); ++i) {
      const RunArtifact* a = run_at(cell, i);
      if (!a) {
        rep.table.rows.push_back({cell.name, std::to_string(i), "failed: " + cell.failures[i], "", "", ""});
        continue;
      }
      const SearchState s = artifact_state(a->dir);
      reports.push_back(dispersion_report(s.arch));
      rep.table.rows.push_back({cell.name, std::to_string(i), "ok", fmt(reports.back().min_gap),
                                fmt(a->trace.epochs.back().skip_fraction), a->genotype.canonical()});
    }
    if (reports.empty()) continue;
    const GapSummary g = summarize_gaps(reports);
    rep.summary["cells"][cell.name] = {{"trials_ok", g.trials}, {"median_gap", g.median}, {"mean_gap", g.mean},
                                       {"std_gap", g.std}};
  }
}

void aggregate_unfair(RecipeReport& rep, const fs::path& out) {
  rep.table.header = {"cell", "trial", "status", "final_argmax", "recovered", "skip_displaced", "final_beta_skip",
                      "final_beta_target"};
  const std::string target = "conv3x3";
  const int tail = 10;
  std::ostringstream traj;
  bool header_written = false;
  for (RecipeCell& cell : rep.cells) {
    const CellTopology topo = make_topology(cell.config.search.space);
    const int skip = topo.candidate_index("skip_connect");
    const int goal = topo.candidate_index(target);
    const int none = topo.candidate_index("none");
    const std::size_t k = topo.candidates.size();
    if (!header_written) {
      traj << "cell,trial,epoch";
      for (const std::string& op : topo.candidates) traj << ",beta." << op;
      traj << ",argmax,recovered\n";
      header_written = true;
    }
    int recovered = 0, displaced = 0, ok = 0;
    for (std::size_t i = 0; i < cell.runs.size(); ++i) {
      const RunArtifact* a = run_at(cell, i);
      if (!a) {
        rep.table.rows.push_back({cell.name, std::to_string(i), "failed: " + cell.failures[i], "", "", "", "", ""});
        continue;
      }
      ++ok;
      const auto& epochs = a->trace.epochs;
      std::vector<int> arg;
      for (const EpochRecord& e : epochs) arg.push_back(row_argmax(std::span(e.alphas).first(k), none));
      bool rec = int(epochs.size()) >= tail;
      for (std::size_t e = epochs.size() >= std::size_t(tail) ? epochs.size() - tail : 0; e < epochs.size(); ++e) {
        rec = rec && arg[e] == goal;
      }
      const bool disp = arg.back() != skip;
      recovered += rec;
      displaced += disp;
      for (std::size_t e = 0; e < epochs.size(); ++e) {
        Eigen::VectorXd row = Eigen::Map<const Eigen::VectorXd>(epochs[e].alphas.data(), Index(k));
        const Eigen::VectorXd b = beta_of(row);
        traj << cell.name << ',' << i << ',' << epochs[e].epoch;
        for (Index c = 0; c < Index(k); ++c) traj << ',' << fmt(b[c]);
        traj << ',' << topo.candidates[std::size_t(arg[e])] << ',' << (rec ? "true" : "false") << '\n';
      }
      Eigen::VectorXd row = Eigen::Map<const Eigen::VectorXd>(epochs.back().alphas.data(), Index(k));
      const Eigen::VectorXd b = beta_of(row);
      rep.table.rows.push_back({cell.name, std::to_string(i), "ok", topo.candidates[std::size_t(arg.back())],
                                rec ? "true" : "false", disp ? "true" : "false", fmt(b[skip]), fmt(b[goal])});
    }
    rep.summary["cells"][cell.name] = {
        {"trials_ok", ok}, {"recovered", recovered}, {"skip_displaced", displaced}, {"target", target}};
  }
  write_text(out / "trajectory.csv", traj.str());
}

void aggregate_neg_init(RecipeReport& rep) {
  rep.table.header = {"cell", "init_value", "trials_ok", "mean_skip_fraction", "skip_dominated"};
  for (RecipeCell& cell : rep.cells) {
    double total = 0.0;
    int ok = 0, dominated = 0;
    for (std::size_t i = 0; i < cell.runs.size(); ++i) {
      const RunArtifact* a = run_at(cell, i);
      if (!a) continue;
      const double f = a->trace.epochs.back().skip_fraction;
      total += f;
      dominated += f >= 2.0 / 3.0 - 1e-12;
      ++ok;
    }
    const double mean = ok ? total / ok : std::nan("");
    rep.table.rows.push_back({cell.name, fmt(cell.config.search.alpha_init.value), std::to_string(ok), fmt(mean),
                              std::to_string(dominated)});
    rep.summary["cells"][cell.name] = {{"init_value", cell.config.search.alpha_init.value},
                                       {"trials_ok", ok},
                                       {"mean_skip_fraction", mean},
                                       {"skip_dominated", dominated}};
  }
}

void aggregate_grid(RecipeReport& rep) {
  rep.table.header = {"cell", "nu", "mu", "trial", "status", "skip_fraction", "min_gap", "alpha_mean", "val_accuracy"};
  for (RecipeCell& cell : rep.cells) {
    const RegularizerSpec& r = cell.config.search.regularizer;
    std::vector<double> skips, gaps, accs;
    for (std::size_t i = 0; i < cell.runs.size(); ++i) {
      const RunArtifact* a = run_at(cell, i);
      if (!a) {
        rep.table.rows.push_back(
            {cell.name, fmt(r.nu), fmt(r.mu), std::to_string(i), "failed: " + cell.failures[i], "", "", "", ""});
        continue;
      }
      const EpochRecord& last = a->trace.epochs.back();
      skips.push_back(last.skip_fraction);
      gaps.push_back(last.min_gap);
      accs.push_back(last.val_accuracy);
      rep.table.rows.push_back({cell.name, fmt(r.nu), fmt(r.mu), std::to_string(i), "ok", fmt(last.skip_fraction),
                                fmt(last.min_gap), fmt(last.alpha.mean), fmt(last.val_accuracy)});
    }
    rep.summary["cells"][cell.name] = {{"nu", r.nu},
                                       {"mu", r.mu},
                                       {"median_skip_fraction", median_of(skips)},
                                       {"median_gap", median_of(gaps)},
                                       {"median_val_accuracy", median_of(accs)}};
  }
}

std::vector<double> symmetric_grid(int half, double radius) {
  std::vector<double> g;
  for (int i = -half; i <= half; ++i) g.push_back(radius * double(i) / double(half));
  return g;
}

void aggregate_landscape(RecipeReport& rep) {
  rep.table.header = {"cell", "trial", "status", "center_loss", "mean_abs_delta_unit_ball"};
  const std::vector<double> coords = symmetric_grid(5, 1.0);
  for (RecipeCell& cell : rep.cells) {
    std::vector<double> deltas;
    for (std::size_t i = 0; i < cell.runs.size(); ++i) {
      const RunArtifact* a = run_at(cell, i);
      if (!a) {
        rep.table.rows.push_back({cell.name, std::to_string(i), "failed: " + cell.failures[i], "", ""});
        continue;
      }
      const RunConfig cfg = artifact_config(a->dir);
      const SearchState s = artifact_state(a->dir);
      const SearchData data = make_search_data(make_dataset(cfg.dataset), cfg.search.train_fraction, cfg.search.seed);
      const LandscapeGrid grid = landscape_scan(s.net, s.arch, data.val.all(), coords, cfg.search.seed);
      std::ostringstream os;
      os << "a,b,loss,accuracy\n";
      for (std::size_t x = 0; x < coords.size(); ++x) {
        for (std::size_t y = 0; y < coords.size(); ++y) {
          os << fmt(coords[x]) << ',' << fmt(coords[y]) << ',' << fmt(grid.loss[x][y]) << ','
             << fmt(grid.accuracy[x][y]) << '\n';
        }
      }
      add_artifact_file(a->dir, "landscape.csv", os.str());
      deltas.push_back(grid.mean_abs_delta_unit_ball);
      rep.table.rows.push_back(
          {cell.name, std::to_string(i), "ok", fmt(grid.center_loss), fmt(grid.mean_abs_delta_unit_ball)});
    }
    rep.summary["cells"][cell.name] = {{"median_mean_abs_delta", median_of(deltas)}};
  }
}

void aggregate_oracle(RecipeReport& rep, const TabularBenchmark& bench) {
  rep.table.header = {"cell", "trial", "status", "genotype", "rank", "regret", "within_p10", "discrepancy_loss_gap",
                      "discrepancy_accuracy_gap"};
  const double p10 = regret_quantile(bench, 0.1);
  rep.summary["p10_regret"] = p10;
  rep.summary["benchmark_hash"] = bench.config_hash;
  for (RecipeCell& cell : rep.cells) {
    std::vector<double> regrets;
    int within = 0;
    Json gaps = Json::array();
    for (std::size_t i = 0; i < cell.runs.size(); ++i) {
      const RunArtifact* a = run_at(cell, i);
      if (!a) {
        rep.table.rows.push_back({cell.name, std::to_string(i), "failed: " + cell.failures[i], "", "", "", "", "", ""});
        gaps.push_back(nullptr);
        continue;
      }
      const Rank r = rank_of(bench, a->genotype);
      const RunConfig cfg = artifact_config(a->dir);
      const SearchState s = artifact_state(a->dir);
      const SearchData data = make_search_data(make_dataset(cfg.dataset), cfg.search.train_fraction, cfg.search.seed);
      const DiscrepancyGap d = discrepancy_gap(s.net, s.arch, a->genotype, data.val.all());
      regrets.push_back(r.regret);
      within += r.regret <= p10;
      gaps.push_back(d.loss_gap);
      rep.table.rows.push_back({cell.name, std::to_string(i), "ok", a->genotype.canonical(), std::to_string(r.rank),
                                fmt(r.regret), r.regret <= p10 ? "true" : "false", fmt(d.loss_gap),
                                fmt(d.accuracy_gap)});
    }
    rep.summary["cells"][cell.name] = {
        {"median_regret", median_of(regrets)}, {"within_p10", within}, {"discrepancy_loss_gaps", gaps}};
  }
}

void pc_expectation_report(RecipeReport& rep) {
  rep.table.header = {"quantity", "l", "n", "analytic", "monte_carlo", "std_error", "z"};
  double max_z = 0.0;
  for (const ExpectationRow& r : expectation_table(3, 4, 7, 100000, 11)) {
    rep.table.rows.push_back({r.quantity, std::to_string(r.l), r.n < 0 ? "" : std::to_string(r.n), fmt(r.analytic),
                              fmt(r.monte_carlo), fmt(r.std_error), fmt(r.z)});
    max_z = std::max(max_z, std::abs(r.z));
  }
  rep.summary["max_abs_z"] = max_z;
  rep.summary["samples"] = 100000;
}

}  // namespace

const std::vector<std::string>& recipe_names() {
  static const std::vector<std::string> names{"skip-dominance", "unfair-init",     "neg-init",    "dispersion",
                                              "landscape",      "pc-expectation", "hyperparam-grid", "oracle-score"};
  return names;
}

RunConfig recipe_base(const std::string& recipe) {
  const auto& names = recipe_names();
  if (std::find(names.begin(), names.end(), recipe) == names.end()) throw LookupError("unknown recipe '" + recipe + "'");
  RunConfig c;
  c.recipe = recipe;
  c.trials = recipe == "landscape" ? 1 : 10;
  c.dataset.generator = "bars";
  c.dataset.samples = 256;
  c.dataset.cue = 0.0;
  c.dataset.noise = 0.0;
  SearchConfig& s = c.search;
  s.space = "reduced";
  s.stack.num_classes = 4;
  s.stack.channels = 8;
  s.stack.num_cells = 2;
  s.epochs = 50;
  s.batch_size = 16;
  s.weight_lr = 0.05;
  s.alpha_optimizer.lr = 0.1;
  if (recipe == "unfair-init") {
    s.space = "edge";
    s.stack.num_cells = 1;
    s.warmup_epochs = 15;
    s.alpha_init.strategy = AlphaInit::Strategy::constant_offset;
    s.alpha_init.op = "skip_connect";
    s.alpha_init.delta = 0.1;
  }
  if (recipe == "dispersion") s.alpha_optimizer.lr = 1e-3;
  if (recipe == "oracle-score") {
    c.dataset = default_oracle_config().train.dataset;
    s.space = "micro";
    s.stack.num_cells = 1;
  }
  return c;
}

std::vector<ExpectationRow> expectation_table(int units, int inputs, std::uint64_t model_seed, long samples,
                                              std::uint64_t mc_seed) {
  const LinearUnitModel m = random_linear_unit(units, inputs, model_seed);
  const LinearUnitGradients exact = expected_gradients(m);
  const MonteCarloGradients mc = monte_carlo_gradients(m, samples, mc_seed);
  std::vector<ExpectationRow> rows;
  auto add = [&](std::string q, int l, int n, double a, double mean, double se) {
    rows.push_back({std::move(q), l, n, a, mean, se, se > 0.0 ? (mean - a) / se : 0.0});
  };
  for (int l = 0; l < units; ++l) {
    for (int n = 0; n < inputs; ++n) add("dw", l, n, exact.dw(l, n), mc.mean.dw(l, n), mc.std_error.dw(l, n));
  }
  for (int l = 0; l < units; ++l) add("dbeta", l, -1, exact.dbeta[l], mc.mean.dbeta[l], mc.std_error.dbeta[l]);
  for (int l = 0; l < units; ++l) add("dalpha", l, -1, exact.dalpha[l], mc.mean.dalpha[l], mc.std_error.dalpha[l]);
  return rows;
}

RecipeReport run_recipe(const std::string& recipe, const fs::path& out, const RecipeOptions& options) {
  RunConfig base = options.base ? *options.base : recipe_base(recipe);
  if (options.base) recipe_base(recipe);  // rejects unknown names
  base.recipe = recipe;
  if (options.trials) base.trials = *options.trials;
  if (options.seed) base.search.seed = *options.seed;

  RecipeReport rep;
  rep.recipe = recipe;
  rep.summary = {{"recipe", recipe}, {"engine_version", engine_version()}, {"cells", Json::object()}};
  fs::create_directories(out);

  if (recipe == "pc-expectation") {
    pc_expectation_report(rep);
  } else {
    // load the table before any search so a bad path fails early
    std::optional<TabularBenchmark> bench;
    if (recipe == "oracle-score") {
      if (options.benchmark) {
        bench = benchmark_from_json(read_text(*options.benchmark));
      } else {
        const OracleConfig oc = default_oracle_config();
        bench = build_benchmark(oc.space, oc.train, oc.seeds, options.jobs);
        write_text(out / "benchmark.json", benchmark_to_json(*bench));
      }
      if (bench->space != base.search.space) throw ContractError("oracle-score: benchmark space differs from the search space");
      if (to_json(bench->config.dataset) != to_json(base.dataset))
        throw ContractError("oracle-score: benchmark dataset differs from the search dataset");
    }

    for (Variant& v : variants_of(recipe, base)) {
      v.config.validate();
      RecipeCell cell;
      cell.name = v.name;
      cell.config = v.config;
      cell.runs.resize(std::size_t(v.config.trials));
      cell.failures.resize(std::size_t(v.config.trials));
      rep.cells.push_back(std::move(cell));
    }
    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (std::size_t c = 0; c < rep.cells.size(); ++c) {
      for (std::size_t t = 0; t < rep.cells[c].runs.size(); ++t) jobs.emplace_back(c, t);
    }
    parallel_for(jobs.size(), options.jobs, [&](std::size_t j) {
      auto [c, t] = jobs[j];
      RecipeCell& cell = rep.cells[c];
      RunConfig one = cell.config;
      one.trials = 1;
      one.search.seed = cell.config.search.seed + t;
      char name[32];
      std::snprintf(name, sizeof name, "trial-%03zu", t);
      try {
        cell.runs[t] = run_single(one, out / cell.name / name);
        if (cell.runs[t].failure) cell.failures[t] = *cell.runs[t].failure;
      } catch (const std::exception& e) {
        cell.failures[t] = e.what();
      }
    });

    if (recipe == "skip-dominance") aggregate_skip(rep);
    if (recipe == "dispersion") aggregate_dispersion(rep);
    if (recipe == "unfair-init") aggregate_unfair(rep, out);
    if (recipe == "neg-init") aggregate_neg_init(rep);
    if (recipe == "hyperparam-grid") aggregate_grid(rep);
    if (recipe == "landscape") aggregate_landscape(rep);
    if (recipe == "oracle-score") aggregate_oracle(rep, *bench);
  }

  Json cells = Json::object();
  for (const RecipeCell& cell : rep.cells) {
    Json runs = Json::array();
    for (std::size_t t = 0; t < cell.runs.size(); ++t) {
      const bool failed = !cell.failures[t].empty();
      rep.any_failed = rep.any_failed || failed;
      runs.push_back({{"trial", t},
                      {"dir", fs::relative(cell.runs[t].dir, out).generic_string()},
                      {"lineage", cell.runs[t].lineage},
                      {"failure", failed ? Json(cell.failures[t]) : Json(nullptr)}});
    }
    cells[cell.name] = {{"config", to_json(cell.config)}, {"runs", runs}};
  }
  rep.summary["runs"] = cells;
  rep.summary["any_failed"] = rep.any_failed;
  write_text(out / "report.csv", csv_text(rep.table));
  write_text(out / "report.json", rep.summary.dump(2) + "\n");
  return rep;
}

}  // namespace sadarts
