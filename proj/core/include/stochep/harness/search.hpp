#pragma once

// Random hyperparameter search: settings are drawn per variant from a stream
// keyed by (master seed, variant index), so adding a variant to the list does
// not change the settings of the others.

#include <cstdint>
#include <string>
#include <vector>

#include "stochep/ep.hpp"
#include "stochep/harness/config.hpp"

namespace stochep::harness {

struct Setting {
  int index = 0;  // within its variant
  Variant variant = Variant::ep;
  EstimatorKind estimator = EstimatorKind::naive;
  double step = 1.0;
  int n_samp = 1;
  int thin = 1;
  int n_inner = 1;
  int warmup_length = 100;
  double warmup_ratio = 2.0;

  /// "<variant>-<index>", e.g. ep-eta-007
  std::string id() const;
};

/// One draw. Integer distributions round to nearest.
double draw(const ParamRange& range, Rng& rng);

std::vector<Setting> draw_settings(const ExperimentConfig& config, const VariantSpace& space, int variant_index);
/// All variants in config order.
std::vector<Setting> draw_all_settings(const ExperimentConfig& config);

/// Seed of the j-th repetition of every setting.
std::uint64_t run_seed(std::uint64_t master_seed, int seed_index);

/// Driver configuration for one (setting, seed) run. Runs are single-threaded;
/// the sweep parallelises across runs.
EpConfig make_ep_config(const ExperimentConfig& config, const Setting& setting, std::uint64_t seed);

}  // namespace stochep::harness
