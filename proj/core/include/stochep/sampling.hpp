#pragma once

// Samplers for tilted distributions and moment estimators built on them.
//
// A chain lives over the extended position (z, w_i) of its site. Every chain
// owns a keyed random stream, so the sample sequence of a site is the same
// whatever order sites are advanced in.

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include "stochep/expfam.hpp"
#include "stochep/random.hpp"
#include "stochep/targets.hpp"

namespace stochep {

/// Unnormalised density exp(base's(z) + power * l_i(z)) over the extended position.
struct TiltedDensity {
  NaturalParams base;
  double power = 1.0;
  const TiltedTarget* target = nullptr;

  int dim() const { return target->extended_dim(); }
  /// Log density at x; fills *grad when non-null.
  double log_density(const Vector& x, Vector* grad = nullptr) const;
};

/// Non-finite log density or gradient at the current chain state.
class ChainFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class KernelKind {
  oracle,  // exact tilted moments, no sampling
  exact,   // i.i.d. draws from the tilted distribution
  rwm,
  hmc,
};

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

struct KernelConfig {
  KernelKind kind = KernelKind::hmc;
  int leapfrog_steps = 10;
  double initial_step_size = 0.1;
  double target_accept = 0.8;      // hmc
  double rwm_target_accept = 0.234;
  bool adapt_mass = true;
  /// Each hmc transition uses step_size * U(1 - j, 1 + j). Breaks the
  /// near-periodic trajectories a fixed path length gives on Gaussian-like targets.
  double step_jitter = 0.2;
};

/// Nesterov dual averaging of log step size.
struct DualAveraging {
  double target = 0.8;
  double gamma = 0.05;
  double t0 = 10.0;
  double kappa = 0.75;

  double mu = 0.0;
  double log_step = 0.0;
  double log_step_bar = 0.0;
  double h_bar = 0.0;
  long count = 0;

  void restart(double step_size);
  /// Feeds one acceptance statistic; returns the next step size to try.
  double update(double accept_prob);
  /// Averaged step size; the current one before any update.
  double final_step() const;
};

struct ChainState {
  Vector position;
  Rng rng;
  double step_size = 0.1;
  Vector inverse_mass;  // diagonal
  DualAveraging adaptation;

  std::uint64_t sampler_steps = 0;  // cost units: leapfrog steps for hmc, 1 otherwise
  std::uint64_t transitions = 0;
  std::uint64_t accepted = 0;
  std::uint64_t divergences = 0;
};

struct StepInfo {
  double accept_prob = 0.0;
  bool accepted = false;
  bool divergent = false;
};

/// Chain for one site. The stream is keyed by (seed, site, epoch).
ChainState make_chain(const Vector& position, const KernelConfig& kernel, std::uint64_t seed,
                      int site, std::uint64_t epoch = 0);

/// Initial extended position: z drawn from `approx` (the current p), w_i from the target.
Vector initial_position(const NaturalParams& approx, const TiltedTarget& target, Rng& rng);

/// One Metropolis step with isotropic proposal N(x, scale^2 I).
StepInfo rwm_step(const TiltedDensity& density, ChainState& state, double proposal_scale);

/// One HMC transition with `leapfrog_steps` leapfrog steps and diagonal mass
/// state.inverse_mass^-1. Energy errors above 1000 count as divergent and
/// are rejected. With jitter > 0 the step size is drawn as described in KernelConfig.
StepInfo hmc_step(const TiltedDensity& density, ChainState& state, int leapfrog_steps, double jitter = 0.0);

/// Warm-up: dual-averaging step size adaptation; for hmc with adapt_mass a
/// diagonal mass is estimated in a middle window (15% / 75% / 10% split).
/// Draws are discarded. Costs are counted in state.sampler_steps.
void warmup_adapt(const TiltedDensity& density, ChainState& state, int n_warmup,
                  const KernelConfig& kernel);

/// Kept z draws (rows) after n_samp * thin transitions, keeping every thin-th.
Matrix draw_samples(const TiltedDensity& density, ChainState& state, int n_samp, int thin,
                    const KernelConfig& kernel);

enum class EstimatorKind { naive, debiased_gaussian };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& name);

struct MomentEstimate {
  MeanParams mean;                      // average of s(z) over kept draws
  std::optional<NaturalParams> natural; // set by the debiased estimator
  int n_used = 0;
  EstimatorKind kind = EstimatorKind::naive;
};

/// Average of s(z) over the rows of `samples`.
MeanParams naive_moments(const Family& family, const Matrix& samples);

/// Unbiased Gaussian natural parameters from n >= d + 3 exact Gaussian draws:
/// precision ((n - d - 2) / (n - 1)) S^-1, shift precision * mean, with S the
/// unbiased sample covariance. The diagonal family is handled per coordinate
/// (d = 1), so it needs n >= 4.
NaturalParams debias_gaussian_naturals(const Family& family, const Matrix& samples);

MomentEstimate estimate_moments(const Family& family, const Matrix& samples, EstimatorKind kind);

/// draw_samples followed by estimate_moments. For KernelKind::exact the
/// target's sampler is used and each draw costs one step.
MomentEstimate draw_moments(const TiltedDensity& density, ChainState& state, int n_samp, int thin,
                            const KernelConfig& kernel, EstimatorKind estimator);

/// One CSV row per kept draw: iteration, index, position components.
void write_chain_trace(std::ostream& out, int iteration, const Matrix& samples);

}  // namespace stochep
