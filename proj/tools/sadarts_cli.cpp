#include "sadarts/errors.hpp"
#include "sadarts/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace sadarts;

namespace {

enum Exit { kOk = 0, kFailed = 1, kUsage = 2, kIntegrity = 3, kDiverged = 4 };

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

int cmd_search(const std::string& config, std::string out, std::optional<int> trials, std::optional<std::uint64_t> seed,
               int jobs) {
  RunConfig cfg = load_run_config(config);
  if (trials) cfg.trials = *trials;
  if (seed) cfg.search.seed = *seed;
  cfg.validate();
  if (out.empty()) out = cfg.output_dir.empty() ? (default_output_root() / "search").string() : cfg.output_dir;
  std::vector<RunArtifact> runs;
  if (cfg.trials == 1) {
    runs.push_back(run_single(cfg, out));
  } else {
    runs = run_trials(cfg, out, jobs);
  }
  int code = kOk;
  for (const RunArtifact& r : runs) {
    std::cout << r.dir.string() << "  " << r.genotype.canonical() << '\n';
    if (r.failure) {
      std::cerr << "diverged: " << r.dir.string() << ": " << *r.failure << '\n';
      code = kDiverged;
    }
  }
  return code;
}

int cmd_experiment(const std::string& recipe, const std::string& config, std::string out, std::optional<int> trials,
                   std::optional<std::uint64_t> seed, int jobs, const std::string& bench) {
  RecipeOptions opt;
  if (!config.empty()) opt.base = load_run_config(config);
  opt.trials = trials;
  opt.seed = seed;
  opt.jobs = jobs;
  if (!bench.empty()) opt.benchmark = bench;
  if (out.empty()) out = (default_output_root() / recipe).string();
  const RecipeReport rep = run_recipe(recipe, out, opt);
  std::cout << read_text(fs::path(out) / "report.csv");
  if (rep.any_failed) {
    std::cerr << "some runs failed; see " << (fs::path(out) / "report.json").string() << '\n';
    return kFailed;
  }
  return kOk;
}

int cmd_oracle_build(const std::string& config, std::string out, int jobs) {
  OracleConfig oc = default_oracle_config();
  if (!config.empty()) {
    try {
      oc = oracle_config_from_json(Json::parse(read_text(config)));
    } catch (const Json::exception& e) {
      throw SchemaError(config + ": not valid JSON: " + e.what());
    }
  }
  if (out.empty()) out = (default_output_root() / "benchmark.json").string();
  const TabularBenchmark b = build_benchmark(oc.space, oc.train, oc.seeds, jobs);
  write_text(out, benchmark_to_json(b));
  std::printf("%s: %zu genotypes, p10 regret %.4f\n", out.c_str(), b.entries.size(), regret_quantile(b, 0.1));
  return kOk;
}

int cmd_oracle_score(const std::string& bench_path, const std::vector<std::string>& runs) {
  const TabularBenchmark b = benchmark_from_json(read_text(bench_path));
  const double p10 = regret_quantile(b, 0.1);
  std::printf("run,genotype,rank,regret,within_p10\n");
  for (const std::string& dir : runs) {
    const Genotype g = derive_artifact(dir);
    const Rank r = rank_of(b, g);
    std::printf("%s,%s,%d,%.17g,%s\n", dir.c_str(), g.canonical().c_str(), r.rank, r.regret,
                r.regret <= p10 ? "true" : "false");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable architecture search with smooth-activation regularization"};
  app.require_subcommand(1);

  std::string config, out, recipe, bench, figure, table = "normal", dir;
  std::vector<std::string> dirs;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  int jobs = 1, edge = 0, steps = 300;
  std::uint64_t eval_seed = 0;

  auto* search = app.add_subcommand("search", "run one search config (one or more trials)");
  search->add_option("--config", config, "run config JSON")->required()->check(CLI::ExistingFile);
  search->add_option("--out", out, "output directory");
  search->add_option("--trials", trials, "override the trial count");
  search->add_option("--seed", seed, "override the base seed");
  search->add_option("--jobs", jobs, "concurrent trials");

  auto* experiment = app.add_subcommand("experiment", "run a recipe and write a comparative report");
  experiment->add_option("--recipe", recipe, "recipe id")->required()->check(CLI::IsMember(recipe_names()));
  experiment->add_option("--config", config, "base run config replacing the recipe default")->check(CLI::ExistingFile);
  experiment->add_option("--out", out, "output directory");
  experiment->add_option("--trials", trials, "trials per configuration");
  experiment->add_option("--seed", seed, "base seed");
  experiment->add_option("--jobs", jobs, "concurrent runs");
  experiment->add_option("--bench", bench, "benchmark table for oracle-score")->check(CLI::ExistingFile);

  auto* derive_cmd = app.add_subcommand("derive", "re-derive the genotype of a run and check it");
  derive_cmd->add_option("dir", dir, "run directory")->required()->check(CLI::ExistingDirectory);

  auto* eval = app.add_subcommand("eval", "retrain a run's genotype and measure the discretization gap");
  eval->add_option("dir", dir, "run directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--seed", eval_seed, "training seed");
  eval->add_option("--steps", steps, "training steps");
  eval->add_option("--out", out, "write the JSON here instead of stdout");

  auto* plot = app.add_subcommand("plotdata", "emit long-format plot data for one figure");
  plot->add_option("dir", dir, "run directory")->required()->check(CLI::ExistingDirectory);
  plot->add_option("--figure", figure, "figure id")->required()->check(CLI::IsMember(figure_names()));
  plot->add_option("--table", table, "normal or reduce (beta-trace)");
  plot->add_option("--edge", edge, "searchable edge row (beta-trace)");
  plot->add_option("--out", out, "write the CSV here instead of stdout");

  auto* obuild = app.add_subcommand("oracle-build", "train every genotype of a small space into a table");
  obuild->add_option("--config", config, "oracle config JSON")->check(CLI::ExistingFile);
  obuild->add_option("--out", out, "benchmark file");
  obuild->add_option("--jobs", jobs, "concurrent trainings");

  auto* oscore = app.add_subcommand("oracle-score", "rank run genotypes against a benchmark table");
  oscore->add_option("--bench", bench, "benchmark file")->required()->check(CLI::ExistingFile);
  oscore->add_option("dirs", dirs, "run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*search) return cmd_search(config, out, trials, seed, jobs);
    if (*experiment) return cmd_experiment(recipe, config, out, trials, seed, jobs, bench);
    if (*derive_cmd) {
      std::cout << derive_artifact(dir).canonical() << '\n';
      return kOk;
    }
    if (*eval) {
      emit(to_json(eval_artifact(dir, eval_seed, steps)).dump(2) + "\n", out);
      return kOk;
    }
    if (*plot) {
      emit(plot_data(dir, figure, table, edge), out);
      return kOk;
    }
    if (*obuild) return cmd_oracle_build(config, out, jobs);
    if (*oscore) return cmd_oracle_score(bench, dirs);
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kUsage;
  } catch (const LookupError& e) {
    std::cerr << "not found: " << e.what() << '\n';
    return kUsage;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << '\n';
    return kIntegrity;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kOk;
}
