#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sadarts/errors.hpp"
#include "sadarts/harness.hpp"

#include <cstdlib>
#include <set>

using namespace sadarts;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sadarts-harness-" + name);
  fs::remove_all(p);
  return p;
}

RunConfig small_config() {
  RunConfig c;
  c.dataset.generator = "bars";
  c.dataset.samples = 32;
  c.search.space = "reduced";
  c.search.stack.num_classes = 4;
  c.search.stack.channels = 4;
  c.search.epochs = 3;
  c.search.batch_size = 8;
  c.search.regularizer.kind = RegularizerSpec::Kind::sa;
  c.search.regularizer.nu = 1.0;
  return c;
}

// Rewrites a trace file without one column, refreshing the manifest.
void drop_trace_column(const fs::path& dir, const std::string& column) {
  CsvTable t = parse_csv(read_text(dir / "trace.csv"));
  const int c = t.column(column);
  REQUIRE(c >= 0);
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    bool first = true;
    for (int i = 0; i < int(cells.size()); ++i) {
      if (i == c) continue;
      out += (first ? "" : ",") + cells[std::size_t(i)];
      first = false;
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  add_artifact_file(dir, "trace.csv", out);
}

}  // namespace

TEST_CASE("run config round trip and strict schema") {
  const RunConfig c = small_config();
  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  Json j = to_json(c);
  j["extra"] = 1;
  CHECK_THROWS_AS(run_config_from_json(j), SchemaError);
  j = to_json(c);
  j["search"]["stack"]["depth"] = 3;
  CHECK_THROWS_AS(run_config_from_json(j), SchemaError);
  j = to_json(c);
  j["dataset"]["colour"] = "red";
  CHECK_THROWS_AS(run_config_from_json(j), SchemaError);
  j = to_json(c);
  j["schema_version"] = 2;
  CHECK_THROWS_AS(run_config_from_json(j), SchemaError);
  j.erase("schema_version");
  CHECK_THROWS_AS(run_config_from_json(j), SchemaError);
  j = to_json(c);
  j["recipe"] = "no-such-recipe";
  CHECK_THROWS_AS(run_config_from_json(j), SchemaError);
  j["recipe"] = "dispersion";
  CHECK(run_config_from_json(j).recipe == "dispersion");
}

TEST_CASE("run config validation checks the dataset against the stack") {
  RunConfig c = small_config();
  c.validate();
  c.dataset.generator = "blobs";
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = small_config();
  c.dataset.image_size = 16;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = small_config();
  c.trials = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = small_config();
  c.dataset.generator = "stripes";
  CHECK_THROWS_AS(c.validate(), SchemaError);
}

TEST_CASE("output root comes from the environment") {
  ::setenv("SADARTS_OUTPUT_ROOT", "/tmp/somewhere", 1);
  CHECK(default_output_root() == fs::path("/tmp/somewhere"));
  ::unsetenv("SADARTS_OUTPUT_ROOT");
  CHECK(default_output_root() == fs::path("runs"));
}

TEST_CASE("trials fan out with base + index seeds and reruns hash identically") {
  const fs::path a = scratch("trials-a"), b = scratch("trials-b");
  RunConfig c = small_config();
  c.trials = 3;
  c.search.seed = 40;
  const auto runs = run_trials(c, a, 2);
  REQUIRE(runs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const RunConfig stored = artifact_config(runs[i].dir);
    CHECK(stored.search.seed == 40 + i);
    CHECK(stored.trials == 1);
    verify_artifact(runs[i].dir);
    CHECK(runs[i].trace.epochs.size() == 3);
  }
  run_trials(c, b, 1);
  for (const char* t : {"trial-000", "trial-001", "trial-002"}) {
    CHECK(read_text(a / t / "manifest.json") == read_text(b / t / "manifest.json"));
    CHECK(read_text(a / t / "trace.csv") == read_text(b / t / "trace.csv"));
  }
  CHECK(read_text(a / "trial-000" / "manifest.json") != read_text(a / "trial-001" / "manifest.json"));
}

TEST_CASE("derive re-checks the stored genotype and the manifest") {
  const fs::path d = scratch("derive");
  const RunArtifact art = run_single(small_config(), d);
  CHECK(derive_artifact(d).canonical() == art.genotype.canonical());
  CHECK(art.lineage.size() == 64);

  // a consistent manifest but a genotype that the weights do not produce
  Genotype other = art.genotype;
  other.normal[0].op = other.normal[0].op == "skip_connect" ? "conv3x3" : "skip_connect";
  add_artifact_file(d, "genotype.json", genotype_to_json(other) + "\n");
  CHECK_THROWS_AS(derive_artifact(d), IntegrityError);

  const fs::path e = scratch("tamper");
  run_single(small_config(), e);
  std::string text = read_text(e / "checkpoint.json");
  text[text.size() / 2] = text[text.size() / 2] == '1' ? '2' : '1';
  write_text(e / "checkpoint.json", text);
  CHECK_THROWS_AS(verify_artifact(e), IntegrityError);
  CHECK_THROWS_AS(eval_artifact(e, 0, 5), IntegrityError);
  fs::remove(e / "summary.json");
  CHECK_THROWS_AS(verify_artifact(e), IntegrityError);
}

TEST_CASE("eval is repeatable and the all-skip genotype matches the logistic baseline") {
  const fs::path d = scratch("eval");
  RunConfig c;
  c.dataset.generator = "blobs";
  c.dataset.samples = 64;
  c.search.space = "reduced";
  c.search.stack.num_classes = 2;
  c.search.stack.channels = 4;
  c.search.epochs = 0;
  c.search.batch_size = 8;
  c.search.alpha_init.strategy = AlphaInit::Strategy::constant_offset;
  c.search.alpha_init.op = "skip_connect";
  c.search.alpha_init.delta = 1.0;
  const RunArtifact art = run_single(c, d);
  CHECK(art.genotype.canonical() == uniform_genotype(make_topology("reduced"), "skip_connect").canonical());

  const EvalReport r1 = eval_artifact(d, 7, 60);
  const EvalReport r2 = eval_artifact(d, 7, 60);
  CHECK(to_json(r1) == to_json(r2));

  const TrainConfig tc = eval_train_config(c, 60);
  const SearchData data = make_search_data(make_dataset(tc.dataset), tc.train_fraction, tc.split_seed);
  const TrainOutcome base = train_skip_baseline(make_topology("reduced"), tc, 7, data);
  CHECK(r1.retrained.val_accuracy == base.val_accuracy);
  CHECK(std::abs(r1.retrained.val_loss - base.val_loss) < 1e-9);
}

TEST_CASE("plot data figures") {
  const fs::path d = scratch("plot");
  run_single(small_config(), d);

  CsvTable stats = parse_csv(plot_data(d, "alpha-stats"));
  CHECK(stats.header == std::vector<std::string>{"figure", "series", "x", "y", "value"});
  CHECK(stats.rows.size() == 9);
  std::set<std::string> series;
  for (const auto& r : stats.rows) series.insert(r[1]);
  CHECK(series == std::set<std::string>{"mean", "median", "std"});

  CsvTable beta = parse_csv(plot_data(d, "beta-trace", "normal", 5));
  CHECK(beta.rows.size() == 9);
  series.clear();
  for (const auto& r : beta.rows) series.insert(r[1]);
  CHECK(series == std::set<std::string>{"sep_conv3x3", "skip_connect", "avg_pool3x3"});
  // the three weights of one epoch sum to one
  double total = 0.0;
  for (const auto& r : beta.rows) {
    if (r[2] == "1") total += std::stod(r[4]);
  }
  CHECK(std::abs(total - 1.0) < 1e-12);

  CHECK_THROWS_AS(plot_data(d, "landscape"), SchemaError);
  CHECK_THROWS_AS(plot_data(d, "histogram"), LookupError);
  CHECK_THROWS_AS(plot_data(d, "beta-trace", "normal", 6), LookupError);

  drop_trace_column(d, "alpha_std");
  try {
    plot_data(d, "alpha-stats");
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("alpha_std") != std::string::npos);
  }
  drop_trace_column(d, "alpha.normal.2-3.skip_connect");
  CHECK_THROWS_AS(plot_data(d, "beta-trace", "normal", 5), SchemaError);
  CHECK_NOTHROW(plot_data(d, "beta-trace", "normal", 0));
}

TEST_CASE("recipe reports reference only their own runs") {
  const fs::path out = scratch("recipe");
  RecipeOptions opt;
  opt.base = small_config();
  opt.trials = 2;
  opt.seed = 5;
  const RecipeReport rep = run_recipe("skip-dominance", out, opt);
  CHECK_FALSE(rep.any_failed);
  REQUIRE(rep.cells.size() == 2);
  CHECK(rep.table.rows.size() == 4);
  const Json report = Json::parse(read_text(out / "report.json"));
  int checked = 0;
  for (auto& [name, cell] : report.at("runs").items()) {
    for (const Json& run : cell.at("runs")) {
      const fs::path dir = out / run.at("dir").get<std::string>();
      CHECK(fs::exists(dir));
      verify_artifact(dir);
      const Json manifest = Json::parse(read_text(dir / "manifest.json"));
      CHECK(manifest.at("lineage") == run.at("lineage"));
      CHECK(artifact_config(dir).search.seed == 5 + run.at("trial").get<std::size_t>());
      ++checked;
    }
  }
  CHECK(checked == 4);
  CHECK(parse_csv(read_text(out / "report.csv")).rows.size() == 4);
  CHECK(report.at("cells").at("sa").at("trials_ok") == 2);
  CHECK_THROWS_AS(run_recipe("no-such-recipe", out, opt), LookupError);
}

TEST_CASE("failed runs are marked in the report") {
  const fs::path out = scratch("recipe-fail");
  RecipeOptions opt;
  opt.base = small_config();
  opt.base->search.weight_lr = 1e300;
  opt.base->search.grad_clip = 1e300;
  opt.trials = 1;
  const RecipeReport rep = run_recipe("hyperparam-grid", out, opt);
  CHECK(rep.any_failed);
  bool marked = false;
  for (const auto& r : rep.table.rows) marked = marked || r[4].rfind("failed", 0) == 0;
  CHECK(marked);
  CHECK(Json::parse(read_text(out / "report.json")).at("any_failed") == true);
}

TEST_CASE("unfair-init trajectory and recovered column") {
  const fs::path out = scratch("unfair");
  RecipeOptions opt;
  RunConfig base = recipe_base("unfair-init");
  base.dataset.samples = 32;
  base.search.stack.channels = 4;
  base.search.epochs = 12;
  base.search.warmup_epochs = 1;
  base.search.batch_size = 8;
  opt.base = base;
  opt.trials = 1;
  const RecipeReport rep = run_recipe("unfair-init", out, opt);
  const CsvTable traj = parse_csv(read_text(out / "trajectory.csv"));
  CHECK(traj.column("recovered") >= 0);
  CHECK(traj.column("beta.conv3x3") >= 0);
  CHECK(traj.rows.size() == 3 * 12);
  for (const auto& r : rep.table.rows) CHECK((r[4] == "true" || r[4] == "false"));
}

TEST_CASE("neg-init reports four init values") {
  const fs::path out = scratch("neg");
  RecipeOptions opt;
  RunConfig base = small_config();
  base.search.epochs = 1;
  opt.base = base;
  opt.trials = 1;
  const RecipeReport rep = run_recipe("neg-init", out, opt);
  REQUIRE(rep.table.rows.size() == 4);
  CHECK(rep.table.rows[0][1] == "-0.5");
  CHECK(rep.table.rows[3][1] == "-5");
}

TEST_CASE("pc-expectation table") {
  const auto rows = expectation_table(3, 4, 7, 20000, 11);
  CHECK(rows.size() == 12 + 3 + 3);
  for (const ExpectationRow& r : rows) {
    CHECK(r.std_error > 0.0);
    CHECK(std::abs(r.z - (r.monte_carlo - r.analytic) / r.std_error) < 1e-12);
  }
}

TEST_CASE("landscape recipe adds a landscape file to each run") {
  const fs::path out = scratch("landscape");
  RecipeOptions opt;
  opt.base = small_config();
  opt.trials = 1;
  run_recipe("landscape", out, opt);
  const fs::path run = out / "sa" / "trial-000";
  verify_artifact(run);
  const CsvTable grid = parse_csv(plot_data(run, "landscape"));
  CHECK(grid.rows.size() == 2 * 11 * 11);
}

TEST_CASE("oracle config document") {
  const OracleConfig d = default_oracle_config();
  const OracleConfig back = oracle_config_from_json(to_json(d));
  CHECK(to_json(back) == to_json(d));
  Json j = to_json(d);
  j["cap"] = 10;
  CHECK_THROWS_AS(oracle_config_from_json(j), SchemaError);
}
