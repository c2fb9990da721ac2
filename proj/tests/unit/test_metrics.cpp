#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stochep/metrics.hpp"

using namespace stochep;

namespace {

Problem clutter_problem(int dim, int sites, std::uint64_t seed) {
  return make_clutter_problem(fixture::clutter(dim, sites, seed));
}

/// A few exact EP sweeps from zero sites, then the outer update.
SiteState warm(const Problem& p, int iterations = 3) {
  EpConfig c;
  c.variant = Variant::ep;
  c.step = 0.5;
  c.kernel.kind = KernelKind::oracle;
  c.max_iterations = iterations;
  c.tolerance = 0.0;
  c.threads = 1;
  SiteState s = run(p, c).state;
  outer_update(s);
  return s;
}

/// L by direct 1-D quadrature of every normaliser (independent of the library's grid).
double oracle_L_1d(const SiteState& s, const Problem& p) {
  const Vector approx = s.approx();
  const double a_theta = log_partition({p.family, s.theta});
  double L = log_partition({p.family, approx});
  for (int i = 0; i < s.m(); ++i) {
    const Vector base = s.theta - s.sites[i] / s.betas[i];
    const double power = 1.0 / s.betas[i];
    const GaussianMoments g = unpack_mean(p.family, forward_map({p.family, s.theta}).values);
    const double sd = std::sqrt(g.covariance(0, 0));
    auto f = [&](double z) {
      const Vector zz = Vector::Constant(1, z);
      return base.dot(statistic(p.family, zz)) + power * p.targets[i]->log_factor(zz);
    };
    const double c = g.mean[0];
    const double Ai = oracle::log_integral(f, c - 30 * sd, c + 30 * sd, f(c));
    L += s.betas[i] * (Ai - a_theta);
  }
  return L;
}

}  // namespace

TEST_CASE("objective at zero sites") {
  const Problem p = clutter_problem(2, 6, 1);
  const SiteState s = make_initial_state(p, Variant::ep);
  const NaturalParams prior{p.family, p.eta0};
  double expect = log_partition(prior);
  for (const auto& t : p.targets) expect += t->exact_tilted_log_normalizer(prior, 1.0) - log_partition(prior);
  CHECK(objective_L(s, p) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("analytic and quadrature objectives agree on 1-D clutter") {
  const Problem p = clutter_problem(1, 8, 2);
  Rng rng = make_stream(2, 0);
  ObjectiveEvaluator quad;
  quad.mode = ObjectiveMode::quadrature;
  for (int rep = 0; rep < 20; ++rep) {
    const SiteState s = fixture::random_state(p, rng, 0.3);
    const double analytic = objective_L(s, p);
    CHECK(oracle::rel_err(objective_L(s, p, quad), analytic) < 1e-6);
    CHECK(oracle::rel_err(oracle_L_1d(s, p), analytic) < 1e-8);
  }
}

TEST_CASE("quadrature objective in two dimensions and its limits") {
  const Problem p = clutter_problem(2, 4, 3);
  Rng rng = make_stream(3, 0);
  ObjectiveEvaluator quad;
  quad.mode = ObjectiveMode::quadrature;
  quad.nodes = 401;
  for (int rep = 0; rep < 3; ++rep) {
    const SiteState s = fixture::random_state(p, rng, 0.3);
    CHECK(oracle::rel_err(objective_L(s, p, quad), objective_L(s, p)) < 1e-6);
  }
  const Problem p3 = clutter_problem(3, 2, 4);
  CHECK_THROWS_AS(objective_L(make_initial_state(p3, Variant::ep), p3, quad), UnsupportedError);

  SiteState bad = make_initial_state(p, Variant::ep);
  bad.sites[0] = -2.0 * p.eta0;
  CHECK(objective_L(bad, p) == std::numeric_limits<double>::infinity());
}

TEST_CASE("finite differences of L equal the moment residual") {
  Rng rng = make_stream(5, 0);
  for (int dim : {1, 2}) {
    const Problem p = clutter_problem(dim, 5, 5 + dim);
    for (int rep = 0; rep < 5; ++rep) {
      const SiteState s = fixture::random_state(p, rng, 0.2);
      const std::vector<Vector> res = moment_residuals(s, p);
      for (int i = 0; i < 5; ++i) {
        // theta is held fixed: only lambda_i moves
        const Vector fd = oracle::gradient(
            [&](const Vector& lam) {
              SiteState t = s;
              t.sites[i] = lam;
              return objective_L(t, p);
            },
            s.sites[i], 1e-6);
        CHECK((fd - res[i]).norm() / std::max(1e-8, res[i].norm()) < 1e-4);
      }
      CHECK(moment_residual(s, p) > 0.0);
      double worst = 0.0;
      for (const Vector& r : res) worst = std::max(worst, r.norm());
      CHECK(moment_residual(s, p) == worst);
    }
  }
}

TEST_CASE("small exact-moment steps decrease L") {
  Rng rng = make_stream(7, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const Problem p = clutter_problem(1 + rep % 2, 10, 20 + rep);
    SiteState s = fixture::random_state(p, rng, 0.1);
    const double before = objective_L(s, p);
    SiteState next = s;
    for (int i = 0; i < s.m(); ++i) {
      const TiltedDensity d = tilted_params(s, p, i);
      next.sites[i] = ep_inner_update(s, i, d.target->exact_tilted_moments(d.base, d.power), 0.01);
    }
    CHECK(objective_L(next, p) < before);
  }
}

TEST_CASE("objective stays finite along a converging exact run") {
  const Problem p = clutter_problem(1, 20, 1);
  EpConfig c;
  c.variant = Variant::ep;
  c.step = 1.0;
  c.kernel.kind = KernelKind::oracle;
  c.max_iterations = 200;
  c.threads = 1;
  c.objective = [&](const SiteState& s) { return objective_L(s, p); };
  const RunResult r = run(p, c);
  REQUIRE(r.converged);
  for (const TraceRow& row : r.trace.rows) CHECK(std::isfinite(row.objective));
  CHECK(r.trace.rows.back().residual < 1e-6);
}

TEST_CASE("moment residual after one undamped update on a single site") {
  const Problem p = clutter_problem(2, 1, 8);
  SiteState s = make_initial_state(p, Variant::ep);
  const TiltedDensity d = tilted_params(s, p, 0);
  s.sites[0] = ep_inner_update(s, 0, d.target->exact_tilted_moments(d.base, 1.0), 1.0);
  outer_update(s);
  CHECK(moment_residual(s, p) < 1e-10);
}

TEST_CASE("KL to a reference") {
  const Problem p = clutter_problem(2, 6, 9);
  Rng rng = make_stream(9, 0);
  const SiteState s = fixture::random_state(p, rng);
  CHECK(std::abs(kl_to_reference(s, s.approx_params())) < 1e-12);
  for (int rep = 0; rep < 20; ++rep) {
    const NaturalParams ref = fixture::random_natural(p.family, rng);
    const double kl = kl_to_reference(s, ref);
    CHECK(kl > 0.0);
    CHECK(kl == doctest::Approx(kl_divergence(ref, s.approx_params())).epsilon(1e-14));
  }
}

TEST_CASE("log-log slope fit") {
  const std::vector<double> x{1e-3, 1e-2, 1e-1};
  const auto [slope, se] = log_log_slope(x, {2e-6, 2e-4, 2e-2});
  CHECK(slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(se == doctest::Approx(0.0));
  CHECK(log_log_slope(x, {3e-3, 3e-2, 3e-1}).first == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("single-update bias laboratory") {
  const Problem p = clutter_problem(1, 6, 10);
  const SiteState s = warm(p);
  const std::vector<double> steps{0.01, 0.1};

  // one sample has zero spread, so EP gets ten
  BiasOptions ten;
  ten.n_samp = 10;
  const BiasReport ep = measure_update_bias(Variant::ep, s, p, steps, 2000, 1, ten);
  CHECK(ep.n_reps == 2000);
  CHECK(ep.seed == 1);
  REQUIRE(ep.bias.size() == 2);
  CHECK(ep.components == 6 * 2);
  // linear in alpha under common random numbers
  CHECK(ep.bias[1] / ep.bias[0] == doctest::Approx(10.0).epsilon(0.01));
  CHECK(ep.z_score[1] > 3.0);

  const BiasReport eta = measure_update_bias(Variant::ep_eta, s, p, steps, 2000, 1);
  for (std::size_t k = 0; k < steps.size(); ++k) CHECK(eta.z_score[k] < 3.0);

  const BiasReport again = measure_update_bias(Variant::ep, s, p, steps, 2000, 1, ten);
  CHECK(std::memcmp(again.bias.data(), ep.bias.data(), sizeof(double) * 2) == 0);
  BiasOptions four = ten;
  four.threads = 4;
  const BiasReport threaded = measure_update_bias(Variant::ep, s, p, steps, 2000, 1, four);
  CHECK(std::memcmp(threaded.bias.data(), ep.bias.data(), sizeof(double) * 2) == 0);

  CHECK_THROWS_AS(measure_update_bias(Variant::ep, s, p, steps, 1, 1), std::invalid_argument);
}

TEST_CASE("fixed-budget comparison") {
  const Problem p = clutter_problem(1, 6, 11);
  const SiteState s = warm(p);
  const std::vector<BudgetArm> arms{
      {Variant::ep, EstimatorKind::naive, 20, {0.1, 0.5}},
      {Variant::ep_eta, EstimatorKind::naive, 1, {0.01, 0.05}},
      {Variant::ep_mu, EstimatorKind::naive, 1, {0.01, 0.05}},
  };
  const auto a = budget_comparison(p, s, arms, 20, 50, 3, 1);
  CHECK(a.size() == 6);
  for (const BudgetEntry& e : a) {
    CHECK(e.n_reps == 50);
    CHECK(e.batches == 20 / e.n_samp);
  }
  const auto b = budget_comparison(p, s, arms, 20, 50, 3, 4);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::memcmp(&a[k].mean_decrease, &b[k].mean_decrease, sizeof(double)) == 0);

  const auto zero = budget_comparison(p, s, arms, 0, 5, 3, 1);
  for (const BudgetEntry& e : zero) {
    CHECK(e.mean_decrease == 0.0);
    CHECK(e.batches == 0);
  }

  const auto best = best_per_arm(a);
  CHECK(best.size() <= 3);
  for (const BudgetEntry& e : best) {
    CHECK(e.failures == 0);
    for (const BudgetEntry& o : a)
      if (o.variant == e.variant && o.n_samp == e.n_samp && o.failures == 0) CHECK(o.mean_decrease <= e.mean_decrease);
  }
  CHECK_THROWS_AS(budget_comparison(p, s, {{Variant::ep, EstimatorKind::naive, 3, {0.5}}}, 20, 5, 3, 1),
                  std::invalid_argument);
}
