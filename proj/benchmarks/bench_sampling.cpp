#include <memory>

#include <benchmark/benchmark.h>

#include "stochep/ep.hpp"
#include "stochep/sampling.hpp"
#include "stochep/targets.hpp"

using namespace stochep;

namespace {

struct HlrBench {
  Problem problem;
  SiteState state;
  TiltedDensity density;

  HlrBench() {
    HlrConfig cfg;
    problem = make_hlr_problem(std::make_shared<const HlrDataset>(hlr_generate_data(cfg, 1)));
    state = make_initial_state(problem, Variant::ep_eta);
    density = tilted_params(state, problem, 0);
  }
};

void BM_HlrLogDensity(benchmark::State& st) {
  const HlrBench b;
  const Vector x = Vector::Constant(b.density.dim(), 0.1);
  Vector grad;
  for (auto _ : st) benchmark::DoNotOptimize(b.density.log_density(x, &grad));
}
BENCHMARK(BM_HlrLogDensity);

void BM_HmcTransition(benchmark::State& st) {
  const HlrBench b;
  KernelConfig k;
  Rng rng = make_stream(1, 0);
  ChainState chain = make_chain(initial_position(b.state.approx_params(), *b.density.target, rng), k, 1, 0);
  warmup_adapt(b.density, chain, 200, k);
  for (auto _ : st) benchmark::DoNotOptimize(hmc_step(b.density, chain, k.leapfrog_steps, k.step_jitter));
  st.counters["leapfrog/s"] = benchmark::Counter(static_cast<double>(st.iterations()) * k.leapfrog_steps,
                                                 benchmark::Counter::kIsRate);
}
BENCHMARK(BM_HmcTransition);

void BM_ClutterExactMoments(benchmark::State& st) {
  ClutterConfig cfg;
  cfg.dim_z = static_cast<int>(st.range(0));
  Rng rng = make_stream(1, 0);
  cfg.observations = generate_clutter_observations(cfg, 20, Vector::Constant(cfg.dim_z, 2.0), rng);
  const Problem p = make_clutter_problem(cfg);
  const SiteState s = make_initial_state(p, Variant::ep);
  const TiltedDensity d = tilted_params(s, p, 0);
  for (auto _ : st) benchmark::DoNotOptimize(d.target->exact_tilted_moments(d.base, 1.0));
}
BENCHMARK(BM_ClutterExactMoments)->Arg(1)->Arg(2)->Arg(4);

void BM_DebiasedEstimator(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const Family f = Family::gaussian_dense(8);
  Rng rng = make_stream(2, 0);
  Matrix x(n, 8);
  for (int r = 0; r < n; ++r) x.row(r) = standard_normal_vector(rng, 8).transpose();
  for (auto _ : st) benchmark::DoNotOptimize(debias_gaussian_naturals(f, x));
}
BENCHMARK(BM_DebiasedEstimator)->Arg(16)->Arg(100)->Arg(1000);

}  // namespace
