#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlkan/model.hpp"
#include "mlkan/multilevel.hpp"
#include "mlkan/problems.hpp"

namespace mlkan::experiment {

using json = nlohmann::json;

inline constexpr int kSummarySchemaVersion = 1;

/// Default configuration tree for an experiment. Every accepted key appears
/// here; this tree is also the schema that user files are checked against.
json default_config(const std::string& experiment);

/// Merges `user` into the defaults of user["experiment"] (or `experiment`
/// when given). Unknown keys and type mismatches throw invalid_argument.
json resolve_config(const json& user, const std::string& experiment = "");

/// Applies "a.b.c=value" to the tree. The value is parsed as JSON when it
/// parses, otherwise taken as a string. The key must already exist.
void apply_override(json& cfg, const std::string& assignment);

/// Reads a JSON config file.
json load_config_file(const std::string& path);

std::unique_ptr<problems::Problem> make_problem(const json& cfg);
model::Network make_network(const json& cfg, const problems::Problem& problem);
multilevel::TrainOptions make_train_options(const json& cfg);

struct LevelSnapshot {
  int level = 0;
  std::size_t params = 0;
  double loss = 0.0;
  double metric = 0.0;
  double spectral_energy = 0.0;  // NaN unless spectra are recorded
  problems::FieldGrid fields;
};

struct RunResult {
  json config;
  multilevel::TrainResult train;
  std::vector<LevelSnapshot> levels;
  json summary;
};

struct RunOptions {
  std::string out_dir;       // empty: no files
  bool write_fields = true;
  bool keep_level_fields = false;
  bool quiet = true;
};

/// Runs one training experiment and, when out_dir is set, writes
/// metrics.csv, summary.json, fields.csv, spectra.csv (Allen-Cahn) and
/// weights.txt there.
RunResult run_experiment(const json& cfg, const RunOptions& opt = {});

void write_metrics_csv(const std::string& path, const std::vector<multilevel::StepRecord>& log);

struct EnsembleResult {
  std::vector<std::uint64_t> seeds;
  std::vector<double> finals;  // final metric (or final loss when there is no metric)
  std::vector<std::string> failures;
  double mean = 0.0;
  double stdev = 0.0;
  json summary;
};

/// Runs the configuration once per seed (sub-directories seed_<s>), then
/// aggregates the final metric. Needs at least two seeds.
EnsembleResult run_ensemble(const json& cfg, const std::vector<std::uint64_t>& seeds, const RunOptions& opt = {});

struct AnalyzeOptions {
  std::vector<int> orders{1, 2, 3, 4};
  std::vector<int> sizes{16, 32, 64, 128};
  std::string out_dir;
  std::uint64_t seed = 1234;
};

/// Eigen reports, ratio fits, singular and NTK bounds. Returns the summary
/// tree and writes eigen_report.csv, ratio_scaling.csv and bounds.csv.
json run_analyze(const AnalyzeOptions& opt);

struct BenchRow {
  int r = 0;
  int n = 0;
  double fast_mean_ms = 0.0, fast_std_ms = 0.0;
  double slow_mean_ms = 0.0, slow_std_ms = 0.0;
  double speedup = 0.0;
  double flop_model = 0.0;  // (n r + r^2) / (n + r)
};

struct BenchOptions {
  std::vector<int> orders{1, 2, 3, 4};
  std::vector<int> sizes{8, 16, 32, 64};
  int reps = 10;
  int batch = 128;
  int width = 64;
  int layers = 3;
  std::uint64_t seed = 1234;
};

/// Forward plus backward time of the change-of-basis path against per-edge
/// Cox-de Boor on a stack of width x width layers.
std::vector<BenchRow> bench_forward(const BenchOptions& opt);
void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows);

std::vector<int> parse_int_list(const std::string& s);

}  // namespace mlkan::experiment
