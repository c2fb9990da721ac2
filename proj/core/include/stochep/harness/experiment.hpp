#pragma once

// Sweep execution and artifact layout under the output directory:
//
//   reference.json       reference optimum (unless reference.path is set)
//   traces/<run>.csv     one per (setting, seed), byte-identical on rerun
//   timing/<run>.csv     wall-clock sidecar of each trace
//   summary.csv          one row per run
//   frontier.csv         step-count frontier per variant
//   frontier_seconds.csv wall-clock frontier (timing dependent)
//   bias.csv, budget.csv clutter-figure tables
//   plots/*.svg
//   manifest.json        resolved config, seeds and SHA-256 of every artifact

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "stochep/harness/config.hpp"
#include "stochep/harness/frontier.hpp"
#include "stochep/harness/reference.hpp"
#include "stochep/harness/search.hpp"
#include "stochep/metrics.hpp"

namespace stochep::harness {

struct RunRecord {
  Setting setting;
  int seed_index = 0;
  std::uint64_t seed = 0;
  bool aborted = false;
  std::string reason;
  int iterations = 0;
  std::uint64_t sampler_steps = 0;
  double initial_kl = 0.0;
  double final_kl = 0.0;
  double best_kl = 0.0;
  int rollbacks = 0;
  int skipped = 0;
  std::string trace_file;  // relative to the output directory
  std::string timing_file;
};

struct SweepResult {
  std::vector<RunRecord> runs;
  std::vector<std::string> failing_settings;  // aborted on at least one seed
};

/// "<setting id>_seed<j>"
std::string run_name(const Setting& setting, int seed_index);

/// Executes every (setting, seed) pair on a pool of config.threads workers
/// (0: all cores) and writes traces/ and timing/. Aborted runs are recorded,
/// never thrown.
SweepResult run_sweep(const ExperimentConfig& config, const ExperimentProblem& problem, const NaturalParams& reference,
                      std::ostream* log = nullptr);

std::string summary_csv(const SweepResult& sweep);

struct FrontierTables {
  std::vector<double> step_grid;
  std::vector<double> second_grid;
  std::map<std::string, std::vector<FrontierPoint>> steps;    // by variant
  std::map<std::string, std::vector<FrontierPoint>> seconds;  // empty without timing files
};

/// Reads summary.csv and the traces it lists. All variants share one grid per axis.
FrontierTables frontier_from_dir(const std::filesystem::path& dir, int grid_points = 64);
std::string frontier_csv(const FrontierTables& tables, FrontierAxis axis);

/// Exact-moment EP from the initial state for bias.warm_iterations iterations,
/// followed by an outer update.
SiteState warm_state(const Problem& problem, const BiasSpec& spec);

std::vector<BiasReport> run_bias(const ExperimentConfig& config, const ExperimentProblem& problem,
                                 std::ostream* log = nullptr);
std::vector<BudgetEntry> run_budget(const ExperimentConfig& config, const ExperimentProblem& problem,
                                    std::ostream* log = nullptr);
std::uint64_t bias_seed(const ExperimentConfig& config, Variant variant);
std::uint64_t budget_seed(const ExperimentConfig& config);

/// manifest.json for `dir`: the resolved config, seeds, and a SHA-256 per
/// artifact. Timing-dependent files are listed without hashes.
void write_manifest(const ExperimentConfig& config, const std::filesystem::path& dir, const std::string& command);

/// The `run` subcommand: reference, sweep, summary, frontier, plots and
/// manifest for sweeps; bias and budget tables for clutter-figure. Returns 0,
/// or 4 when some setting failed. Throws ConfigError / ReferenceError.
int run_experiment(const ExperimentConfig& config, std::ostream& log);

}  // namespace stochep::harness
