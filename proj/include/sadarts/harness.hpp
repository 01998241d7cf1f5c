#pragma once

#include "sadarts/config_json.hpp"
#include "sadarts/oracle.hpp"
#include "sadarts/pc_expectation.hpp"
#include "sadarts/search.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sadarts {

namespace fs = std::filesystem;

inline constexpr int kRunSchemaVersion = 1;
const std::string& engine_version();

/// One run document: dataset plus search settings, the recipe it belongs
/// to (empty for a plain search), where to write and how many trials.
struct RunConfig {
  DatasetSpec dataset;
  SearchConfig search;
  std::string recipe;
  std::string output_dir;
  int trials = 1;

  /// Throws ContractError when the dataset cannot feed the stack or the
  /// search settings are inconsistent.
  void validate() const;
};

Json to_json(const RunConfig& c);
/// Strict parse: unknown keys and a wrong schema_version are SchemaErrors.
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const fs::path& path);

/// Output root from SADARTS_OUTPUT_ROOT, else "runs".
fs::path default_output_root();

// ---- artifacts ------------------------------------------------------------

/// Files of one run directory, all listed in manifest.json with their
/// SHA-256. The lineage id is the hash of config.json.
struct RunArtifact {
  fs::path dir;
  std::string lineage;
  Genotype genotype;
  SearchTrace trace;
  /// Set when the search diverged; the trace holds the epochs before it.
  std::optional<std::string> failure;
};

/// Searches with `cfg` (trials must be 1) and writes config.json,
/// trace.csv, genotype.json, checkpoint.json, dispersion.csv,
/// summary.json and manifest.json to `dir`. A divergent search still
/// writes its partial trace and records the failure in summary.json.
RunArtifact run_single(const RunConfig& cfg, const fs::path& dir);

/// Trial i runs with seed base + i in dir/trial-NNN; at most `jobs` trials
/// run at once.
std::vector<RunArtifact> run_trials(const RunConfig& cfg, const fs::path& dir, int jobs = 1);

/// Checks every file against the manifest; throws IntegrityError on a
/// missing file or a hash mismatch.
void verify_artifact(const fs::path& dir);

/// Adds or replaces a file in a run directory and refreshes the manifest.
void add_artifact_file(const fs::path& dir, const std::string& name, const std::string& content);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& content);

RunConfig artifact_config(const fs::path& dir);
/// Search state restored from the run's checkpoint.
SearchState artifact_state(const fs::path& dir);

/// Re-derives the genotype from the stored final weights. Throws
/// IntegrityError when it differs from genotype.json.
Genotype derive_artifact(const fs::path& dir);

struct EvalReport {
  Genotype genotype;
  TrainOutcome retrained;
  DiscrepancyGap discrepancy;
};

/// Training recipe for evaluating a run's genotype: the run's dataset,
/// stack and split, with `steps` SGD steps at the run's weight lr.
TrainConfig eval_train_config(const RunConfig& cfg, int steps = 300);

/// Trains the stored genotype from scratch with `seed` and measures the
/// supernet-versus-child gap on the validation split.
EvalReport eval_artifact(const fs::path& dir, std::uint64_t seed, int steps = 300);
Json to_json(const EvalReport& r);

// ---- plot data --------------------------------------------------------------

/// A CSV file as header plus string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index; -1 when absent.
  int column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);

const std::vector<std::string>& figure_names();

/// Long-format rows (figure, series, x, y, value) for one figure of a run:
/// beta-trace (softmax weights of one edge per epoch), alpha-stats (mean,
/// median and std per epoch) or landscape (needs landscape.csv). Throws
/// SchemaError naming any missing column, LookupError for an unknown
/// figure or edge.
std::string plot_data(const fs::path& dir, const std::string& figure, const std::string& table = "normal",
                      int edge_row = 0);

// ---- recipes ----------------------------------------------------------------

const std::vector<std::string>& recipe_names();

/// Base run settings of a recipe at desk scale.
RunConfig recipe_base(const std::string& recipe);

struct RecipeOptions {
  /// Replaces the built-in base; the recipe still applies its own variants.
  std::optional<RunConfig> base;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  /// Needed by oracle-score.
  std::optional<fs::path> benchmark;
};

/// One configuration of a recipe, run over every trial.
struct RecipeCell {
  std::string name;
  RunConfig config;
  std::vector<RunArtifact> runs;
  std::vector<std::string> failures;
};

struct RecipeReport {
  std::string recipe;
  std::vector<RecipeCell> cells;
  /// Written as report.csv.
  CsvTable table;
  /// Written as report.json together with the lineage ids of every run.
  Json summary;
  bool any_failed = false;
};

/// Runs every configuration of the recipe into out/<cell>/trial-NNN,
/// aggregates, and writes report.csv and report.json to `out`. Throws
/// LookupError for an unknown recipe.
RecipeReport run_recipe(const std::string& recipe, const fs::path& out, const RecipeOptions& options = {});

/// Monte-Carlo versus analytic gradient rows for the linear-unit model.
struct ExpectationRow {
  std::string quantity;
  int l = 0;
  int n = -1;
  double analytic = 0.0;
  double monte_carlo = 0.0;
  double std_error = 0.0;
  double z = 0.0;
};

std::vector<ExpectationRow> expectation_table(int units, int inputs, std::uint64_t model_seed, long samples,
                                              std::uint64_t mc_seed);

/// Oracle builder document: {"schema_version", "space", "train", "seeds"}.
struct OracleConfig {
  std::string space = "micro";
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

OracleConfig oracle_config_from_json(const Json& j);
Json to_json(const OracleConfig& c);
/// The micro benchmark recipe used by oracle-score.
OracleConfig default_oracle_config();

}  // namespace sadarts
