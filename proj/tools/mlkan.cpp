// Command-line driver: run, ensemble, analyze, bench, config.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mlkan/experiment.hpp"

using namespace mlkan;
using experiment::json;

namespace {

struct RunArgs {
  std::string experiment;
  std::string config;
  std::string basis;
  std::string schedule;
  std::string out;
  std::vector<std::string> overrides;
  long long seed = -1;
  bool verbose = false;
};

void add_run_flags(CLI::App* app, RunArgs& a) {
  app->add_option("experiment", a.experiment, "regression | poisson | burgers | allen-cahn (or set in --config)");
  app->add_option("--config", a.config, "JSON configuration file");
  app->add_option("--basis", a.basis, "spline | relu")->check(CLI::IsMember({"spline", "relu"}));
  app->add_option("--schedule", a.schedule, "epochs per level, coarse to fine, e.g. 800,400,200");
  app->add_option("--out", a.out, "output directory")->required();
  app->add_option("--override", a.overrides, "key.path=value (repeatable)");
  app->add_flag("-v,--verbose", a.verbose, "print progress to stderr");
}

json build_config(const RunArgs& a) {
  json user = a.config.empty() ? json::object() : experiment::load_config_file(a.config);
  json cfg = experiment::resolve_config(user, a.experiment);
  if (a.seed >= 0) cfg["seed"] = a.seed;
  if (!a.basis.empty()) cfg["model"]["basis"] = a.basis;
  if (!a.schedule.empty()) cfg["train"]["schedule"] = multilevel::parse_schedule(a.schedule);
  for (const auto& o : a.overrides) experiment::apply_override(cfg, o);
  // surface type and range errors before any training starts
  auto problem = experiment::make_problem(cfg);
  experiment::make_network(cfg, *problem);
  experiment::make_train_options(cfg);
  return cfg;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (int v : experiment::parse_int_list(s)) {
    if (v < 0) throw std::invalid_argument("seeds must be nonnegative");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel spline KAN training and analysis"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "train one configuration");
  add_run_flags(run, run_args);
  run->add_option("--seed", run_args.seed, "random seed")->check(CLI::NonNegativeNumber);

  RunArgs ens_args;
  std::string seeds = "1234,1235,1236,1237,1238";
  auto* ens = app.add_subcommand("ensemble", "train one configuration over several seeds");
  add_run_flags(ens, ens_args);
  ens->add_option("--seeds", seeds, "comma-separated seeds (at least two)")->capture_default_str();

  experiment::AnalyzeOptions an;
  std::string an_orders = "1,2,3,4", an_sizes = "16,32,64,128";
  auto* analyze = app.add_subcommand("analyze", "spectral analysis of the change of basis");
  analyze->add_option("--orders", an_orders, "spline orders")->capture_default_str();
  analyze->add_option("--sizes", an_sizes, "interval counts")->capture_default_str();
  analyze->add_option("--out", an.out_dir, "output directory")->required();
  analyze->add_option("--seed", an.seed, "seed for the random networks of the NTK check")->capture_default_str();

  experiment::BenchOptions bo;
  std::string b_orders = "1,2,3,4", b_sizes = "8,16,32,64", b_out;
  auto* bench = app.add_subcommand("bench", "time change-of-basis layers against Cox-de Boor");
  bench->add_option("--orders", b_orders, "spline orders")->capture_default_str();
  bench->add_option("--sizes", b_sizes, "interval counts")->capture_default_str();
  bench->add_option("--reps", bo.reps, "repetitions")->capture_default_str();
  bench->add_option("--batch", bo.batch, "batch size")->capture_default_str();
  bench->add_option("--width", bo.width, "layer width")->capture_default_str();
  bench->add_option("--layers", bo.layers, "layer count")->capture_default_str();
  bench->add_option("--seed", bo.seed, "random seed")->capture_default_str();
  bench->add_option("--out", b_out, "output directory")->required();

  std::string cfg_name;
  auto* config = app.add_subcommand("config", "print the default configuration of an experiment");
  config->add_option("experiment", cfg_name, "regression | poisson | burgers | allen-cahn")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const json cfg = build_config(run_args);
      experiment::RunOptions ro;
      ro.out_dir = run_args.out;
      ro.quiet = !run_args.verbose;
      const auto res = experiment::run_experiment(cfg, ro);
      std::cout << "final loss " << res.train.final_loss.total << "  metric " << res.train.final_metric << "  params "
                << res.train.params_per_level.back() << '\n';
      if (res.train.diverged) {
        std::cerr << "training diverged: " << res.train.error << '\n';
        return 3;
      }
      return 0;
    }
    if (*ens) {
      const json cfg = build_config(ens_args);
      experiment::RunOptions ro;
      ro.out_dir = ens_args.out;
      ro.quiet = !ens_args.verbose;
      const auto er = experiment::run_ensemble(cfg, parse_seeds(seeds), ro);
      std::cout << "mean " << er.mean << "  stdev " << er.stdev << "  survivors " << er.finals.size() << '\n';
      for (const auto& f : er.failures) std::cerr << f << '\n';
      return er.failures.empty() ? 0 : 3;
    }
    if (*analyze) {
      an.orders = experiment::parse_int_list(an_orders);
      an.sizes = experiment::parse_int_list(an_sizes);
      const json s = experiment::run_analyze(an);
      for (const auto& o : s["orders"]) {
        std::cout << "r=" << o["r"] << "  slope " << o.value("slope", json()) << "  ntk ratio " << o["ntk"]["ratio"]
                  << '\n';
      }
      return 0;
    }
    if (*config) {
      std::cout << experiment::default_config(cfg_name).dump(2) << '\n';
      return 0;
    }
    if (*bench) {
      bo.orders = experiment::parse_int_list(b_orders);
      bo.sizes = experiment::parse_int_list(b_sizes);
      const auto rows = experiment::bench_forward(bo);
      std::filesystem::create_directories(b_out);
      experiment::write_bench_csv((std::filesystem::path(b_out) / "bench.csv").string(), rows);
      for (const auto& r : rows) std::printf("r=%d n=%d speedup %.2f (model %.2f)\n", r.r, r.n, r.speedup, r.flop_model);
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
