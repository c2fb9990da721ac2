#pragma once

// Problem construction from a config, and the reference optimum runs are
// scored against.

#include <filesystem>
#include <memory>
#include <ostream>
#include <string>

#include "stochep/harness/config.hpp"
#include "stochep/harness/io.hpp"

namespace stochep::harness {

struct ExperimentProblem {
  Problem problem;
  std::shared_ptr<const ClutterConfig> clutter;  // set for clutter experiments
  std::shared_ptr<const HlrDataset> hlr;         // set for hlr-synthetic
};

ExperimentProblem build_problem(const ExperimentConfig& config);

/// JSON text describing everything the reference depends on.
std::string reference_provenance(const ExperimentConfig& config);

/// Clutter: exact-moment EP to the configured residual tolerance (seed
/// independent). HLR: staged sampling EP with the debiased estimator, seeded
/// by `seed`, returning the average over the last iterations of the final
/// stage. Throws ReferenceError on non-convergence or an aborted stage.
NaturalParams compute_reference(const ExperimentConfig& config, const ExperimentProblem& problem,
                                std::uint64_t seed, std::ostream* log = nullptr);

/// Where the reference of `config` lives: reference.path, else <output_dir>/reference.json.
std::filesystem::path reference_path(const ExperimentConfig& config);

/// Loads the stored reference. An explicit reference.path must exist and
/// verify. The default location is reused when its provenance matches and
/// recomputed otherwise, unless reference.compute is false.
NaturalParams obtain_reference(const ExperimentConfig& config, const ExperimentProblem& problem,
                               std::ostream* log = nullptr);

}  // namespace stochep::harness
