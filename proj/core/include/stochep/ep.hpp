#pragma once

// Site updates and the parallel EP driver.
//
// State: prior eta0, sites lambda_i, outer parameter theta, powers beta_i.
// The approximation is p = exp((eta0 + sum_j lambda_j)'s(z) - A(.)); the i-th
// tilted distribution is exp((theta - lambda_i / beta_i)'s(z) + l_i(z) / beta_i).

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stochep/expfam.hpp"
#include "stochep/sampling.hpp"
#include "stochep/targets.hpp"

namespace stochep {

enum class Variant { ep, ep_eta, ep_mu, snep };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct SiteState {
  Family family;
  Vector eta0;
  std::vector<Vector> sites;
  Vector theta;
  std::vector<double> betas;

  int m() const { return static_cast<int>(sites.size()); }
  /// eta0 + sum_j lambda_j
  Vector approx() const;
  NaturalParams approx_params() const { return {family, approx()}; }
};

/// lambda_i = 0 (ep, ep-eta, ep-mu) or eta0 / (2m) (snep); theta = eta0 + sum lambda.
/// Empty `betas` means beta_i = 1.
SiteState make_initial_state(const Problem& problem, Variant variant, std::vector<double> betas = {});

/// theta <- eta0 + sum_j lambda_j. Throws DomainError if the result is improper.
void outer_update(SiteState& state);

/// Natural parameter theta - lambda_i / beta_i of the i-th tilted base.
NaturalParams tilted_base(const SiteState& state, int i);
TiltedDensity tilted_params(const SiteState& state, const Problem& problem, int i);

/// lambda_i - alpha (eta0 + sum lambda - eta_hat), eta_hat an estimate of grad A*(E_pi[s]).
Vector ep_inner_update(const SiteState& state, int i, const NaturalParams& tilted_natural, double alpha);
/// Same with eta_hat = grad A*(moments).
Vector ep_inner_update(const SiteState& state, int i, const MeanParams& moments, double alpha);

/// (1 - alpha) lambda_i + alpha (grad A*(moments) - eta0 - sum_{j != i} lambda_j)
Vector conventional_ep_update(const SiteState& state, int i, const MeanParams& moments, double alpha);

/// lambda_i - eps * d2A*(mu) (mu - moments), mu = grad A(eta0 + sum lambda).
Vector ep_eta_update(const SiteState& state, int i, const MeanParams& moments, double eps);

/// grad A*((1 - eps) mu + eps moments) - eta0 - sum_{j != i} lambda_j.
Vector ep_mu_update(const SiteState& state, int i, const MeanParams& moments, double eps);

/// lambda_i <- grad A*(grad A(lambda_i) - eps (mu - moments)). Needs lambda_i proper.
Vector snep_update(const SiteState& state, int i, const MeanParams& moments, double eps);

/// Applies the variant's rule. `estimate.natural` replaces grad A*(mean) for ep.
Vector site_update(Variant variant, const SiteState& state, int i, const MomentEstimate& estimate, double step);

struct EpConfig {
  Variant variant = Variant::ep;
  double step = 1.0;  // alpha for ep, eps otherwise
  int n_inner = 1;
  int n_samp = 1;
  int thin = 1;
  EstimatorKind estimator = EstimatorKind::naive;
  KernelConfig kernel;
  int max_iterations = 100;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;

  int warmup_length = 100;
  double warmup_ratio = 2.0;  // sampling-to-warm-up ratio

  double tolerance = 1e-6;  // oracle kernel only
  int max_retries = 5;
  int threads = 0;          // 0: all available
  std::uint64_t max_sampler_steps = 0;  // 0: unlimited
  double max_wall_seconds = 0.0;        // 0: unlimited; a hit makes the trace timing-dependent
  int average_last = 0;     // iterate-average the last k approximations

  std::vector<double> betas;
  std::optional<NaturalParams> reference;
  std::optional<SiteState> initial_state;
  std::function<double(const SiteState&)> objective;
  std::string chain_trace_dir;
};

/// Iterations between warm-up phases: round(ratio * length / (n_samp * thin)), at least 1.
int warmup_interval(const EpConfig& config);

/// Validates ranges; throws std::invalid_argument.
void validate(const EpConfig& config, const Problem& problem);

struct TraceRow {
  int iteration = 0;
  std::uint64_t sampler_steps = 0;  // cumulative
  double wall_seconds = 0.0;        // cumulative
  double kl = 0.0;                  // to reference, NaN without one
  double residual = 0.0;            // NaN when exact moments are unavailable
  double objective = 0.0;           // NaN without an objective
  int rollbacks = 0;                // cumulative
  int skipped = 0;                  // cumulative
};

struct RunTrace {
  std::vector<TraceRow> rows;
};

struct RunResult {
  SiteState state;
  RunTrace trace;
  bool converged = false;
  bool aborted = false;
  std::string abort_reason;
  std::optional<NaturalParams> averaged;
  std::uint64_t sampler_steps = 0;
};

RunResult run(const Problem& problem, const EpConfig& config);

}  // namespace stochep
