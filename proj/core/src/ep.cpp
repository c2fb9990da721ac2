#include "stochep/ep.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include "stochep/metrics.hpp"

namespace stochep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Vector sum_except(const SiteState& state, int i) {
  Vector acc = state.eta0;
  for (int j = 0; j < state.m(); ++j)
    if (j != i) acc += state.sites[static_cast<std::size_t>(j)];
  return acc;
}

const Vector& site(const SiteState& state, int i) { return state.sites.at(static_cast<std::size_t>(i)); }

bool all_exact(const Problem& problem) {
  for (const auto& t : problem.targets)
    if (!t->has_exact_moments()) return false;
  return true;
}

// Per-site outcome of one moment estimation.
struct SiteMoments {
  std::optional<MomentEstimate> estimate;
  std::string fault;
};

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::ep: return "ep";
    case Variant::ep_eta: return "ep-eta";
    case Variant::ep_mu: return "ep-mu";
    case Variant::snep: return "snep";
  }
  return "?";
}

Variant variant_from_string(const std::string& name) {
  if (name == "ep") return Variant::ep;
  if (name == "ep-eta") return Variant::ep_eta;
  if (name == "ep-mu") return Variant::ep_mu;
  if (name == "snep") return Variant::snep;
  throw std::invalid_argument("unknown variant '" + name + "'");
}

Vector SiteState::approx() const {
  Vector acc = eta0;
  for (const Vector& l : sites) acc += l;
  return acc;
}

SiteState make_initial_state(const Problem& problem, Variant variant, std::vector<double> betas) {
  const int m = problem.sites();
  if (m < 1) throw std::invalid_argument("problem has no sites");
  if (betas.empty()) betas.assign(static_cast<std::size_t>(m), 1.0);
  if (static_cast<int>(betas.size()) != m) throw std::invalid_argument("one beta per site is required");
  for (double b : betas)
    if (!(b > 0.0)) throw std::invalid_argument("beta_i must be positive");

  SiteState s{problem.family, problem.eta0, {}, problem.eta0, std::move(betas)};
  const Vector init = variant == Variant::snep ? Vector(problem.eta0 / (2.0 * m))
                                               : Vector(Vector::Zero(problem.family.dim_s()));
  s.sites.assign(static_cast<std::size_t>(m), init);
  if (variant == Variant::snep) require_natural_domain(s.family, init, "snep site initialisation");
  outer_update(s);
  return s;
}

void outer_update(SiteState& state) {
  Vector theta = state.approx();
  require_natural_domain(state.family, theta, "outer update (eta0 + sum lambda)");
  state.theta = std::move(theta);
}

NaturalParams tilted_base(const SiteState& state, int i) {
  return {state.family, state.theta - site(state, i) / state.betas.at(static_cast<std::size_t>(i))};
}

TiltedDensity tilted_params(const SiteState& state, const Problem& problem, int i) {
  return {tilted_base(state, i), 1.0 / state.betas.at(static_cast<std::size_t>(i)),
          problem.targets.at(static_cast<std::size_t>(i)).get()};
}

// --- update rules -----------------------------------------------------------------

Vector ep_inner_update(const SiteState& state, int i, const NaturalParams& tilted_natural, double alpha) {
  return site(state, i) - alpha * (state.approx() - tilted_natural.values);
}

Vector ep_inner_update(const SiteState& state, int i, const MeanParams& moments, double alpha) {
  return ep_inner_update(state, i, backward_map(moments), alpha);
}

Vector conventional_ep_update(const SiteState& state, int i, const MeanParams& moments, double alpha) {
  return (1.0 - alpha) * site(state, i) + alpha * (backward_map(moments).values - sum_except(state, i));
}

Vector ep_eta_update(const SiteState& state, int i, const MeanParams& moments, double eps) {
  const MeanParams mu = forward_map(state.approx_params());
  return site(state, i) - eps * jvp_backward(mu, mu.values - moments.values);
}

Vector ep_mu_update(const SiteState& state, int i, const MeanParams& moments, double eps) {
  const MeanParams mu = forward_map(state.approx_params());
  const MeanParams blend{state.family, (1.0 - eps) * mu.values + eps * moments.values};
  return backward_map(blend).values - sum_except(state, i);
}

Vector snep_update(const SiteState& state, int i, const MeanParams& moments, double eps) {
  const MeanParams mu = forward_map(state.approx_params());
  const MeanParams gamma = forward_map({state.family, site(state, i)});
  return backward_map({state.family, gamma.values - eps * (mu.values - moments.values)}).values;
}

Vector site_update(Variant variant, const SiteState& state, int i, const MomentEstimate& estimate, double step) {
  switch (variant) {
    case Variant::ep:
      return estimate.natural ? ep_inner_update(state, i, *estimate.natural, step)
                              : ep_inner_update(state, i, estimate.mean, step);
    case Variant::ep_eta: return ep_eta_update(state, i, estimate.mean, step);
    case Variant::ep_mu: return ep_mu_update(state, i, estimate.mean, step);
    case Variant::snep: return snep_update(state, i, estimate.mean, step);
  }
  throw std::logic_error("unhandled variant");
}

// --- driver ------------------------------------------------------------------------

int warmup_interval(const EpConfig& config) {
  const double per_update = static_cast<double>(config.n_samp) * config.thin;
  const long k = std::lround(config.warmup_ratio * config.warmup_length / per_update);
  return static_cast<int>(std::max(1L, k));
}

void validate(const EpConfig& c, const Problem& problem) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (c.variant == Variant::ep && !(c.step > 0.0 && c.step <= 1.0)) fail("alpha must lie in (0, 1]");
  if (c.variant != Variant::ep && !(c.step > 0.0)) fail("eps must be positive");
  if (c.n_inner < 1) fail("n_inner must be >= 1");
  if (c.n_samp < 1) fail("n_samp must be >= 1");
  if (c.thin < 1) fail("thin must be >= 1");
  if (c.max_iterations < 0) fail("max_iterations must be >= 0");
  if (c.max_retries < 0) fail("max_retries must be >= 0");
  if (c.kernel.leapfrog_steps < 1) fail("leapfrog_steps must be >= 1");
  if (c.kernel.kind != KernelKind::oracle && c.warmup_length < 1) fail("warmup_length must be >= 1");
  if (!(c.warmup_ratio > 0.0)) fail("warmup_ratio must be positive");
  if (c.estimator == EstimatorKind::debiased_gaussian) {
    if (c.variant != Variant::ep) fail("the debiased estimator only applies to ep");
    const int d = problem.family.kind() == FamilyKind::gaussian_dense ? problem.family.dim_z() : 1;
    if (c.n_samp <= d + 2) fail("debiased estimator needs n_samp >= d + 3");
  }
  if (c.kernel.kind == KernelKind::oracle && !all_exact(problem)) fail("oracle kernel needs exact tilted moments");
  if (c.kernel.kind == KernelKind::exact)
    for (const auto& t : problem.targets)
      if (!t->has_exact_sampler()) fail("exact kernel needs an exact tilted sampler");
}

RunResult run(const Problem& problem, const EpConfig& config) {
  validate(config, problem);
  const auto t_start = std::chrono::steady_clock::now();
  const int m = problem.sites();
  const bool sampling = config.kernel.kind != KernelKind::oracle;
  const bool exact_available = all_exact(problem);

  RunResult result;
  result.state = config.initial_state ? *config.initial_state
                                      : make_initial_state(problem, config.variant, config.betas);
  SiteState& state = result.state;
  if (state.m() != m) throw std::invalid_argument("initial state has the wrong number of sites");

  const int threads = config.threads > 0 ? config.threads : tbb::this_task_arena::max_concurrency();
  tbb::task_arena arena(threads);

  // Chains start from a draw from the current approximation (the prior if p is improper).
  std::vector<ChainState> chains;
  if (sampling) {
    const NaturalParams start_p = in_natural_domain(state.family, state.approx())
                                      ? state.approx_params()
                                      : NaturalParams{state.family, state.eta0};
    for (int i = 0; i < m; ++i) {
      Rng init_rng = make_stream(config.seed, static_cast<std::uint64_t>(i), config.epoch + 0x9e37);
      const Vector x0 = initial_position(start_p, *problem.targets[static_cast<std::size_t>(i)], init_rng);
      chains.push_back(make_chain(x0, config.kernel, config.seed, i, config.epoch));
    }
  }

  std::vector<std::unique_ptr<std::ofstream>> chain_dumps;
  if (sampling && !config.chain_trace_dir.empty()) {
    std::filesystem::create_directories(config.chain_trace_dir);
    for (int i = 0; i < m; ++i) {
      auto path = std::filesystem::path(config.chain_trace_dir) / ("site_" + std::to_string(i) + ".csv");
      chain_dumps.push_back(std::make_unique<std::ofstream>(path));
      *chain_dumps.back() << "# stochep chain trace v1\niteration,index";
      for (int k = 0; k < problem.family.dim_z(); ++k) *chain_dumps.back() << ",z" << k + 1;
      *chain_dumps.back() << '\n';
    }
  }

  int rollbacks = 0;
  int skipped = 0;
  std::vector<Vector> history;

  auto total_steps = [&] {
    std::uint64_t n = 0;
    for (const ChainState& c : chains) n += c.sampler_steps;
    return n;
  };
  auto record = [&](int iteration) {
    TraceRow row;
    row.iteration = iteration;
    row.sampler_steps = total_steps();
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    row.kl = config.reference ? kl_to_reference(state, *config.reference) : kNaN;
    row.residual = kNaN;
    if (exact_available) {
      try {
        row.residual = moment_residual(state, problem);
      } catch (const std::exception&) {
        row.residual = kNaN;
      }
    }
    row.objective = config.objective ? config.objective(state) : kNaN;
    row.rollbacks = rollbacks;
    row.skipped = skipped;
    result.trace.rows.push_back(row);
    return row;
  };

  const TraceRow first = record(0);
  if (!sampling && first.residual < config.tolerance) result.converged = true;

  const int interval = warmup_interval(config);
  std::vector<SiteMoments> moments(static_cast<std::size_t>(m));

  for (int iter = 1; iter <= config.max_iterations && !result.converged; ++iter) {
    outer_update(state);
    const bool warm = sampling && (iter - 1) % interval == 0;

    for (int inner = 0; inner < config.n_inner; ++inner) {
      // Snapshot read, owned write: every site reads `state`, writes only moments[i].
      arena.execute([&] {
        tbb::parallel_for(0, m, [&](int i) {
          SiteMoments& out = moments[static_cast<std::size_t>(i)];
          out = {};
          try {
            const TiltedDensity density = tilted_params(state, problem, i);
            if (!sampling) {
              out.estimate = MomentEstimate{density.target->exact_tilted_moments(density.base, density.power),
                                            std::nullopt, 0, EstimatorKind::naive};
              return;
            }
            ChainState& chain = chains[static_cast<std::size_t>(i)];
            if (warm && inner == 0) warmup_adapt(density, chain, config.warmup_length, config.kernel);
            const Matrix samples = draw_samples(density, chain, config.n_samp, config.thin, config.kernel);
            if (!chain_dumps.empty()) write_chain_trace(*chain_dumps[static_cast<std::size_t>(i)], iter, samples);
            out.estimate = estimate_moments(state.family, samples, config.estimator);
          } catch (const DomainError& e) {
            out.fault = std::string("skip: ") + e.what();
          } catch (const std::exception& e) {
            out.fault = std::string("fault: ") + e.what();
          }
        });
      });

      for (int i = 0; i < m; ++i) {
        const SiteMoments& sm = moments[static_cast<std::size_t>(i)];
        if (!sm.estimate && sm.fault.rfind("fault", 0) == 0) {
          result.aborted = true;
          result.abort_reason = "site " + std::to_string(i) + " " + sm.fault;
        }
      }
      if (result.aborted) break;

      // Apply the batch; on a global domain violation restore and halve the step.
      double step = config.step;
      bool accepted = false;
      for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        std::vector<Vector> next(state.sites);
        int batch_skips = 0;
        for (int i = 0; i < m; ++i) {
          const SiteMoments& sm = moments[static_cast<std::size_t>(i)];
          if (!sm.estimate) {
            ++batch_skips;
            continue;
          }
          try {
            Vector updated = site_update(config.variant, state, i, *sm.estimate, step);
            if (!updated.allFinite()) throw DomainError("non-finite site update");
            next[static_cast<std::size_t>(i)] = std::move(updated);
          } catch (const DomainError&) {
            ++batch_skips;
          }
        }
        SiteState candidate = state;
        candidate.sites = std::move(next);
        if (in_natural_domain(candidate.family, candidate.approx())) {
          state.sites = std::move(candidate.sites);
          skipped += batch_skips;
          accepted = true;
          break;
        }
        ++rollbacks;
        step *= 0.5;
      }
      if (!accepted) {
        result.aborted = true;
        result.abort_reason = "iteration " + std::to_string(iter) + ": approximation left the natural domain after " +
                              std::to_string(config.max_retries) + " step halvings";
        break;
      }
    }
    if (result.aborted) break;

    require_natural_domain(state.family, state.approx(), "approximation after accepted batch");
    if (config.average_last > 0) history.push_back(state.approx());
    const TraceRow row = record(iter);
    if (!sampling && row.residual < config.tolerance) result.converged = true;
    if (config.max_sampler_steps > 0 && row.sampler_steps >= config.max_sampler_steps) break;
    if (config.max_wall_seconds > 0.0 && row.wall_seconds >= config.max_wall_seconds) break;
  }

  if (config.average_last > 0 && !history.empty()) {
    const std::size_t k = std::min<std::size_t>(history.size(), static_cast<std::size_t>(config.average_last));
    Vector acc = Vector::Zero(state.family.dim_s());
    for (std::size_t j = history.size() - k; j < history.size(); ++j) acc += history[j];
    result.averaged = NaturalParams{state.family, acc / static_cast<double>(k)};
  }
  result.sampler_steps = total_steps();
  return result;
}

}  // namespace stochep
