#pragma once

// Experiment configuration. The on-disk format is JSON checked against
// docs/config.schema.json (embedded at build time).

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochep/ep.hpp"
#include "stochep/sampling.hpp"
#include "stochep/targets.hpp"

namespace stochep::harness {

/// Invalid or unreadable configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { clutter_figure, clutter_convergence, hlr_synthetic };
enum class Scale { smoke, desk, full };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);
std::string to_string(Scale scale);
Scale scale_from_string(const std::string& name);

/// One searched hyperparameter.
struct ParamRange {
  enum class Dist { fixed, uniform, log_uniform, log_uniform_int, choice };
  Dist dist = Dist::fixed;
  double low = 0.0;
  double high = 0.0;
  double value = 0.0;
  std::vector<double> values;

  static ParamRange fixed(double v);
  static ParamRange log_uniform(double lo, double hi);
  static ParamRange log_uniform_int(double lo, double hi);
  static ParamRange choice(std::vector<double> v);
};

struct VariantSpace {
  Variant variant = Variant::ep;
  EstimatorKind estimator = EstimatorKind::naive;
  ParamRange step;
  ParamRange n_samp;
  ParamRange thin;
  ParamRange n_inner;
};

struct WarmupSpace {
  ParamRange length = ParamRange::log_uniform_int(99.5, 1000.5);
  ParamRange ratio = ParamRange::log_uniform(1.0, 4.0);
};

struct ReferenceStage {
  int n_samp = 1000;
  int iterations = 10;
  double step = 0.5;
};

struct ReferenceSpec {
  std::string path;       // empty: <output_dir>/reference.json
  bool compute = true;    // compute when missing; false makes a missing file an error
  std::uint64_t seed = 11;
  std::vector<ReferenceStage> stages;
  int average_last = 8;   // iterate averaging over the final stage
  int warmup_length = 500;
  double exact_step = 0.5;      // clutter: exact-moment EP
  double exact_tolerance = 1e-10;
  int exact_max_iterations = 10000;
};

struct BiasSpec {
  std::vector<double> steps{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  int replications = 10000;
  int ep_n_samp = 10;
  int warm_iterations = 3;
  double warm_step = 0.5;
  int budget = 100;
  int budget_replications = 1000;
  std::vector<double> budget_ep_steps{0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  std::vector<double> budget_eps_steps{1e-3, 3e-3, 0.01, 0.02, 0.05, 0.1, 0.2};
};

struct ClutterSpec {
  int sites = 20;
  int dim_z = 1;
  double clutter_weight = 0.5;
  double clutter_variance = 10.0;
  double prior_variance = 100.0;
  double true_z = 2.0;  // every coordinate
  std::uint64_t data_seed = 1;
};

struct HlrSpec {
  HlrConfig model;
  std::uint64_t data_seed = 1;
  HlrParameterization parameterization = HlrParameterization::non_centered;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::hlr_synthetic;
  Scale scale = Scale::desk;
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  int threads = 0;

  std::vector<VariantSpace> variants;
  WarmupSpace warmup;
  int n_settings = 24;
  int n_seeds = 3;

  std::uint64_t max_sampler_steps = 1000000;
  int max_iterations = 100000;
  double wall_seconds = 0.0;  // 0: no cap

  KernelConfig kernel;
  ClutterSpec clutter;
  HlrSpec hlr;
  ReferenceSpec reference;
  BiasSpec bias;

  int dim_z() const;
};

/// Default search space for `variant` on a dim_z-dimensional problem.
VariantSpace default_space(Variant variant, int dim_z);

/// Parses JSON text, validates it against the embedded schema and fills
/// defaults. `scale` (from the command line) overrides the file.
ExperimentConfig parse_config(const std::string& text, std::optional<Scale> scale = std::nullopt);
ExperimentConfig load_config(const std::string& path, std::optional<Scale> scale = std::nullopt);

/// The fully resolved configuration as canonical JSON (sorted keys, two-space indent).
std::string to_json(const ExperimentConfig& config);

/// The embedded schema text.
const std::string& config_schema();

}  // namespace stochep::harness
