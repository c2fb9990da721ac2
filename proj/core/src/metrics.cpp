#include "stochep/metrics.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <tuple>

#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

namespace stochep {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int arena_threads(int threads) { return threads > 0 ? threads : tbb::this_task_arena::max_concurrency(); }

double log_sum_exp(const Vector& v) {
  const double hi = v.maxCoeff();
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((v.array() - hi).exp().sum());
}

// Trapezoid nodes and log weights on [lo, hi].
void trapezoid(double lo, double hi, int nodes, Vector& x, Vector& log_w) {
  x = Vector::LinSpaced(nodes, lo, hi);
  const double h = (hi - lo) / (nodes - 1);
  log_w = Vector::Constant(nodes, std::log(h));
  log_w[0] = log_w[nodes - 1] = std::log(0.5 * h);
}

// Linear part of an update around the exact moments: a mean-zero control
// variate for the deviation from the noise-free update.
Vector linear_term(Variant variant, const SiteState& state, int i, const MeanParams& exact, const Vector& xi,
                   double step) {
  switch (variant) {
    case Variant::ep:
      return step * jvp_backward(exact, xi);
    case Variant::ep_mu: {
      const MeanParams mu = forward_map(state.approx_params());
      const MeanParams b{state.family, (1.0 - step) * mu.values + step * exact.values};
      return jvp_backward(b, step * xi);
    }
    case Variant::snep: {
      const MeanParams mu = forward_map(state.approx_params());
      const MeanParams gamma = forward_map({state.family, state.sites[static_cast<std::size_t>(i)]});
      const MeanParams b{state.family, gamma.values - step * (mu.values - exact.values)};
      return jvp_backward(b, step * xi);
    }
    case Variant::ep_eta:
      break;
  }
  return Vector::Zero(xi.size());
}

}  // namespace

// --- objective ------------------------------------------------------------------------

double quadrature_log_normalizer(const TiltedTarget& target, const NaturalParams& base, double power,
                                 const NaturalParams& center, const ObjectiveEvaluator& grid) {
  const Family& f = base.family;
  const int d = f.dim_z();
  if (d > 2) throw UnsupportedError("quadrature objective supports dim_z <= 2");
  if (grid.nodes < 3) throw std::invalid_argument("quadrature needs at least 3 nodes");
  const GaussianMoments g = unpack_mean(f, forward_map(center).values);

  std::vector<Vector> xs(static_cast<std::size_t>(d)), lws(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) {
    const double sd = std::sqrt(g.covariance(k, k));
    trapezoid(g.mean[k] - grid.half_width * sd, g.mean[k] + grid.half_width * sd, grid.nodes,
              xs[static_cast<std::size_t>(k)], lws[static_cast<std::size_t>(k)]);
  }
  auto log_f = [&](const Vector& z) { return base.values.dot(statistic(f, z)) + power * target.log_factor(z); };

  const int n = grid.nodes;
  Vector terms(d == 1 ? n : n * n);
  Vector z(d);
  if (d == 1) {
    for (int a = 0; a < n; ++a) {
      z[0] = xs[0][a];
      terms[a] = lws[0][a] + log_f(z);
    }
  } else {
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        z << xs[0][a], xs[1][b];
        terms[a * n + b] = lws[0][a] + lws[1][b] + log_f(z);
      }
  }
  return log_sum_exp(terms);
}

double objective_L(const SiteState& state, const Problem& problem, const ObjectiveEvaluator& evaluator) {
  const Family& f = state.family;
  const Vector approx = state.approx();
  if (!in_natural_domain(f, approx) || !in_natural_domain(f, state.theta)) return kInf;
  const NaturalParams center{f, approx};
  const double a_theta = log_partition({f, state.theta});
  double L = log_partition(center);
  for (int i = 0; i < state.m(); ++i) {
    const double beta = state.betas[static_cast<std::size_t>(i)];
    const NaturalParams base = tilted_base(state, i);
    const TiltedTarget& target = *problem.targets[static_cast<std::size_t>(i)];
    double ai;
    if (evaluator.mode == ObjectiveMode::analytic) {
      try {
        ai = target.exact_tilted_log_normalizer(base, 1.0 / beta);
      } catch (const DomainError&) {
        return kInf;
      }
    } else {
      ai = quadrature_log_normalizer(target, base, 1.0 / beta, center, evaluator);
    }
    L += beta * (ai - a_theta);
  }
  return L;
}

std::vector<Vector> moment_residuals(const SiteState& state, const Problem& problem) {
  const Vector approx = state.approx();
  const MeanParams mu = forward_map({state.family, approx});
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(state.m()));
  for (int i = 0; i < state.m(); ++i) {
    const double beta = state.betas[static_cast<std::size_t>(i)];
    const NaturalParams base{state.family, approx - state.sites[static_cast<std::size_t>(i)] / beta};
    const MeanParams tilted = problem.targets[static_cast<std::size_t>(i)]->exact_tilted_moments(base, 1.0 / beta);
    out.push_back(mu.values - tilted.values);
  }
  return out;
}

double moment_residual(const SiteState& state, const Problem& problem) {
  double worst = 0.0;
  for (const Vector& r : moment_residuals(state, problem)) worst = std::max(worst, r.norm());
  return worst;
}

double kl_to_reference(const SiteState& state, const NaturalParams& reference) {
  return kl_divergence(reference, state.approx_params());
}

// --- bias laboratory ----------------------------------------------------------------------

std::pair<double, double> log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += std::log(x[k]);
    my += std::log(y[k]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (std::log(x[k]) - mx) * (std::log(x[k]) - mx);
    sxy += (std::log(x[k]) - mx) * (std::log(y[k]) - my);
  }
  const double slope = sxy / sxx;
  if (n < 3) return {slope, std::numeric_limits<double>::quiet_NaN()};
  double sse = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double r = std::log(y[k]) - my - slope * (std::log(x[k]) - mx);
    sse += r * r;
  }
  return {slope, std::sqrt(sse / (n - 2) / sxx)};
}

BiasReport measure_update_bias(Variant variant, const SiteState& state, const Problem& problem,
                               const std::vector<double>& steps, int n_reps, std::uint64_t seed,
                               const BiasOptions& options) {
  if (n_reps < 2) throw std::invalid_argument("bias measurement needs at least 2 replications");
  const int m = state.m();
  const int ds = state.family.dim_s();
  const int C = m * ds;
  const int S = static_cast<int>(steps.size());
  const bool use_cv = options.control_variate && variant != Variant::ep_eta;

  std::vector<MeanParams> exact;
  std::vector<NaturalParams> bases;
  std::vector<double> powers;
  for (int i = 0; i < m; ++i) {
    const TiltedTarget& t = *problem.targets[static_cast<std::size_t>(i)];
    if (!t.has_exact_moments() || !t.has_exact_sampler())
      throw std::invalid_argument("bias measurement needs exact tilted moments and sampling");
    bases.push_back(tilted_base(state, i));
    powers.push_back(1.0 / state.betas[static_cast<std::size_t>(i)]);
    exact.push_back(t.exact_tilted_moments(bases.back(), powers.back()));
  }
  // Noise-free updates.
  std::vector<std::vector<Vector>> clean(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s)
    for (int i = 0; i < m; ++i) {
      MomentEstimate e{exact[static_cast<std::size_t>(i)], std::nullopt, 0, EstimatorKind::naive};
      if (options.estimator == EstimatorKind::debiased_gaussian) e.natural = backward_map(e.mean);
      clean[static_cast<std::size_t>(s)].push_back(site_update(variant, state, i, e, steps[static_cast<std::size_t>(s)]));
    }

  Matrix dev = Matrix::Zero(n_reps, static_cast<Eigen::Index>(S) * C);
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> bad = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>::Zero(n_reps, S);

  tbb::task_arena arena(arena_threads(options.threads));
  arena.execute([&] {
    tbb::parallel_for(0, n_reps, [&](int r) {
      for (int i = 0; i < m; ++i) {
        Rng rng = make_stream(seed, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(i));
        const TiltedTarget& t = *problem.targets[static_cast<std::size_t>(i)];
        Matrix samples(options.n_samp, state.family.dim_z());
        for (int k = 0; k < options.n_samp; ++k)
          samples.row(k) = t.sample_tilted(bases[static_cast<std::size_t>(i)], powers[static_cast<std::size_t>(i)], rng).transpose();
        std::optional<MomentEstimate> est;
        try {
          est = estimate_moments(state.family, samples, options.estimator);
        } catch (const std::exception&) {
          for (int s = 0; s < S; ++s) bad(r, s) = 1;
          continue;
        }
        const Vector xi = est->mean.values - exact[static_cast<std::size_t>(i)].values;
        for (int s = 0; s < S; ++s) {
          if (bad(r, s)) continue;
          const double step = steps[static_cast<std::size_t>(s)];
          try {
            Vector d = site_update(variant, state, i, *est, step) - clean[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
            if (use_cv) d -= linear_term(variant, state, i, exact[static_cast<std::size_t>(i)], xi, step);
            if (!d.allFinite()) throw DomainError("non-finite deviation");
            dev.row(r).segment(static_cast<Eigen::Index>(s) * C + static_cast<Eigen::Index>(i) * ds, ds) = d.transpose();
          } catch (const DomainError&) {
            bad(r, s) = 1;
          }
        }
      }
    });
  });

  BiasReport rep;
  rep.variant = variant;
  rep.options = options;
  rep.seed = seed;
  rep.n_reps = n_reps;
  rep.components = C;
  rep.steps = steps;
  const double k_null = std::sqrt(2.0 / std::numbers::pi);
  const double k_spread = std::sqrt(1.0 - 2.0 / std::numbers::pi);
  std::vector<double> fit_x, fit_y;
  for (int s = 0; s < S; ++s) {
    int n_ok = 0;
    Vector sum = Vector::Zero(C), sumsq = Vector::Zero(C);
    for (int r = 0; r < n_reps; ++r) {
      if (bad(r, s)) continue;
      ++n_ok;
      const Vector row = dev.row(r).segment(static_cast<Eigen::Index>(s) * C, C).transpose();
      sum += row;
      sumsq += row.cwiseAbs2();
    }
    rep.failures.push_back(n_reps - n_ok);
    if (n_ok < 2) {
      rep.bias.push_back(std::numeric_limits<double>::quiet_NaN());
      rep.stderr_.push_back(std::numeric_limits<double>::quiet_NaN());
      rep.null_level.push_back(std::numeric_limits<double>::quiet_NaN());
      rep.z_score.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const Vector mean = sum / n_ok;
    const Vector var = ((sumsq - n_ok * mean.cwiseAbs2()) / (n_ok - 1.0)).cwiseMax(0.0);
    const Vector se = (var / n_ok).cwiseSqrt();
    const double bias = mean.cwiseAbs().mean();
    const double pooled = std::sqrt(se.squaredNorm()) / C;
    const double null_level = k_null * se.mean();
    const double z = pooled > 0.0 ? (bias - null_level) / (k_spread * pooled) : kInf;
    rep.bias.push_back(bias);
    rep.stderr_.push_back(pooled);
    rep.null_level.push_back(null_level);
    rep.z_score.push_back(z);
    if (z > 3.0 && bias > 0.0) {
      fit_x.push_back(steps[static_cast<std::size_t>(s)]);
      fit_y.push_back(bias);
    }
  }
  rep.fitted_points = static_cast<int>(fit_x.size());
  std::tie(rep.slope, rep.slope_stderr) = log_log_slope(fit_x, fit_y);
  return rep;
}

// --- fixed-budget comparison -------------------------------------------------------------

std::vector<BudgetEntry> budget_comparison(const Problem& problem, const SiteState& start,
                                           const std::vector<BudgetArm>& arms, int budget, int n_reps,
                                           std::uint64_t seed, int threads) {
  if (n_reps < 1) throw std::invalid_argument("budget comparison needs replications");
  const double l_start = objective_L(start, problem);
  if (!std::isfinite(l_start)) throw DomainError("objective is not finite at the starting state");
  const int m = start.m();
  tbb::task_arena arena(arena_threads(threads));

  std::vector<BudgetEntry> out;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    const BudgetArm& arm = arms[a];
    if (arm.n_samp < 1 || budget % arm.n_samp != 0)
      throw std::invalid_argument("budget must be divisible by n_samp");
    const int batches = budget / arm.n_samp;
    for (std::size_t s = 0; s < arm.steps.size(); ++s) {
      const double step = arm.steps[s];
      std::vector<double> decrease(static_cast<std::size_t>(n_reps), 0.0);
      std::vector<char> failed(static_cast<std::size_t>(n_reps), 0);
      arena.execute([&] {
        tbb::parallel_for(0, n_reps, [&](int r) {
          SiteState st = start;
          std::vector<Rng> rngs;
          for (int i = 0; i < m; ++i)
            rngs.push_back(make_stream(derive_seed(seed, a), static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(i)));
          try {
            for (int b = 0; b < batches; ++b) {
              std::vector<Vector> next(st.sites);
              for (int i = 0; i < m; ++i) {
                const NaturalParams base = tilted_base(st, i);
                const double power = 1.0 / st.betas[static_cast<std::size_t>(i)];
                const TiltedTarget& t = *problem.targets[static_cast<std::size_t>(i)];
                Matrix samples(arm.n_samp, st.family.dim_z());
                for (int k = 0; k < arm.n_samp; ++k)
                  samples.row(k) = t.sample_tilted(base, power, rngs[static_cast<std::size_t>(i)]).transpose();
                const MomentEstimate est = estimate_moments(st.family, samples, arm.estimator);
                next[static_cast<std::size_t>(i)] = site_update(arm.variant, st, i, est, step);
              }
              st.sites = std::move(next);
              if (!in_natural_domain(st.family, st.approx())) throw DomainError("approximation left the domain");
            }
            const double l_end = objective_L(st, problem);
            if (!std::isfinite(l_end)) throw DomainError("objective not finite");
            decrease[static_cast<std::size_t>(r)] = l_start - l_end;
          } catch (const std::exception&) {
            failed[static_cast<std::size_t>(r)] = 1;
          }
        });
      });
      BudgetEntry e;
      e.variant = arm.variant;
      e.estimator = arm.estimator;
      e.n_samp = arm.n_samp;
      e.step = step;
      e.batches = batches;
      e.n_reps = n_reps;
      double sum = 0.0, sumsq = 0.0;
      int ok = 0;
      for (int r = 0; r < n_reps; ++r) {
        if (failed[static_cast<std::size_t>(r)]) {
          ++e.failures;
          continue;
        }
        ++ok;
        sum += decrease[static_cast<std::size_t>(r)];
        sumsq += decrease[static_cast<std::size_t>(r)] * decrease[static_cast<std::size_t>(r)];
      }
      if (ok > 0) {
        e.mean_decrease = sum / ok;
        e.stderr_ = ok > 1 ? std::sqrt(std::max(0.0, (sumsq - ok * e.mean_decrease * e.mean_decrease) / (ok - 1.0)) / ok) : 0.0;
      } else {
        e.mean_decrease = -kInf;
      }
      out.push_back(e);
    }
  }
  return out;
}

std::vector<BudgetEntry> best_per_arm(const std::vector<BudgetEntry>& entries) {
  std::map<std::tuple<int, int, int>, BudgetEntry> best;
  for (const BudgetEntry& e : entries) {
    if (e.failures > 0) continue;
    const auto key = std::make_tuple(static_cast<int>(e.variant), static_cast<int>(e.estimator), e.n_samp);
    auto it = best.find(key);
    if (it == best.end() || e.mean_decrease > it->second.mean_decrease) best[key] = e;
  }
  std::vector<BudgetEntry> out;
  for (auto& [k, e] : best) out.push_back(e);
  return out;
}

}  // namespace stochep
