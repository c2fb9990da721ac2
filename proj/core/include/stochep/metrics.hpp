#pragma once

// Diagnostics: the saddle-point objective L, moment residuals, KL to a
// reference, and the single-update bias and fixed-budget laboratories.

#include <cstdint>
#include <vector>

#include "stochep/ep.hpp"
#include "stochep/expfam.hpp"
#include "stochep/sampling.hpp"
#include "stochep/targets.hpp"

namespace stochep {

enum class ObjectiveMode {
  analytic,    // exact tilted normalisers from the targets
  quadrature,  // trapezoid rule, dim_z <= 2
};

struct ObjectiveEvaluator {
  ObjectiveMode mode = ObjectiveMode::analytic;
  int nodes = 2001;          // per dimension
  double half_width = 12.0;  // in standard deviations of the current approximation
};

/// log int exp(base's(z) + power * l(z)) dz by the trapezoid rule on a grid
/// spanning `center` mean +- half_width sd per dimension.
double quadrature_log_normalizer(const TiltedTarget& target, const NaturalParams& base, double power,
                                 const NaturalParams& center, const ObjectiveEvaluator& grid);

/// L = A(eta0 + sum lambda) + sum_i beta_i [A_i((theta - lambda_i / beta_i, 1 / beta_i)) - A(theta)].
/// Returns +inf when any of the arguments is improper.
double objective_L(const SiteState& state, const Problem& problem, const ObjectiveEvaluator& evaluator = {});

/// grad A(eta0 + sum lambda) - E_{p_i}[s] for each site, with theta taken
/// as eta0 + sum lambda. Needs exact tilted moments.
std::vector<Vector> moment_residuals(const SiteState& state, const Problem& problem);
/// max_i of the Euclidean norm of moment_residuals.
double moment_residual(const SiteState& state, const Problem& problem);

/// KL(reference || current approximation).
double kl_to_reference(const SiteState& state, const NaturalParams& reference);

struct BiasOptions {
  int n_samp = 1;
  EstimatorKind estimator = EstimatorKind::naive;
  /// Subtract step * d2A*(b) (m_hat - m), which has mean zero under exact
  /// sampling, from each deviation. Never applied to ep-eta, whose update is
  /// itself linear in m_hat.
  bool control_variate = true;
  int threads = 0;
};

struct BiasReport {
  Variant variant = Variant::ep;
  BiasOptions options;
  std::uint64_t seed = 0;
  int n_reps = 0;
  int components = 0;
  std::vector<double> steps;
  std::vector<double> bias;        // mean over components of |mean deviation|
  std::vector<double> stderr_;     // standard error of `bias`
  std::vector<double> null_level;  // expected `bias` if the true bias were zero
  std::vector<double> z_score;     // (bias - null_level) / (null-spread)
  std::vector<int> failures;       // replications with an invalid update
  double slope = 0.0;
  double slope_stderr = 0.0;
  int fitted_points = 0;
};

/// Bias in lambda_i after one parallel update from `state` (theta fixed at
/// state.theta), measured against the noise-free update with exact moments.
/// Every target needs exact moments and an exact tilted sampler.
BiasReport measure_update_bias(Variant variant, const SiteState& state, const Problem& problem,
                               const std::vector<double>& steps, int n_reps, std::uint64_t seed,
                               const BiasOptions& options = {});

/// Least-squares slope of log y on log x with its standard error.
std::pair<double, double> log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

struct BudgetArm {
  Variant variant = Variant::ep;
  EstimatorKind estimator = EstimatorKind::naive;
  int n_samp = 1;
  std::vector<double> steps;
};

struct BudgetEntry {
  Variant variant = Variant::ep;
  EstimatorKind estimator = EstimatorKind::naive;
  int n_samp = 1;
  double step = 0.0;
  int batches = 0;
  double mean_decrease = 0.0;
  double stderr_ = 0.0;
  int n_reps = 0;
  int failures = 0;  // replications that left the domain; the entry is then unusable
};

/// Decrease L(start) - L(end) after budget / n_samp parallel batches with theta
/// fixed, averaged over replications, for every (arm, step) pair.
std::vector<BudgetEntry> budget_comparison(const Problem& problem, const SiteState& start,
                                           const std::vector<BudgetArm>& arms, int budget, int n_reps,
                                           std::uint64_t seed, int threads = 0);

/// Best usable entry (largest mean decrease, no failures) per (variant, estimator, n_samp).
std::vector<BudgetEntry> best_per_arm(const std::vector<BudgetEntry>& entries);

}  // namespace stochep
