#include <benchmark/benchmark.h>

#include "stochep/ep.hpp"
#include "stochep/targets.hpp"

using namespace stochep;

namespace {

struct UpdateBench {
  Problem problem;
  SiteState state;
  MeanParams moments;

  UpdateBench(int dim, Variant variant) {
    ClutterConfig cfg;
    cfg.dim_z = dim;
    Rng rng = make_stream(1, 0);
    cfg.observations = generate_clutter_observations(cfg, 20, Vector::Constant(dim, 2.0), rng);
    problem = make_clutter_problem(cfg);
    state = make_initial_state(problem, variant);
    const TiltedDensity d = tilted_params(state, problem, 0);
    moments = d.target->exact_tilted_moments(d.base, 1.0);
  }
};

template <Vector (*Update)(const SiteState&, int, const MeanParams&, double), Variant V>
void BM_SiteUpdate(benchmark::State& st) {
  const UpdateBench b(static_cast<int>(st.range(0)), V);
  for (auto _ : st) benchmark::DoNotOptimize(Update(b.state, 0, b.moments, 0.01));
}
Vector ep_update(const SiteState& s, int i, const MeanParams& m, double a) { return ep_inner_update(s, i, m, a); }
BENCHMARK_TEMPLATE(BM_SiteUpdate, ep_update, Variant::ep)->Arg(1)->Arg(4)->Arg(8);
BENCHMARK_TEMPLATE(BM_SiteUpdate, ep_eta_update, Variant::ep_eta)->Arg(1)->Arg(4)->Arg(8);
BENCHMARK_TEMPLATE(BM_SiteUpdate, ep_mu_update, Variant::ep_mu)->Arg(1)->Arg(4)->Arg(8);
BENCHMARK_TEMPLATE(BM_SiteUpdate, snep_update, Variant::snep)->Arg(1)->Arg(4)->Arg(8);

void BM_OracleSweep(benchmark::State& st) {
  const UpdateBench b(static_cast<int>(st.range(0)), Variant::ep);
  EpConfig c;
  c.variant = Variant::ep;
  c.step = 0.5;
  c.kernel.kind = KernelKind::oracle;
  c.max_iterations = 1;
  c.tolerance = 0.0;
  c.threads = 1;
  for (auto _ : st) benchmark::DoNotOptimize(run(b.problem, c));
}
BENCHMARK(BM_OracleSweep)->Arg(1)->Arg(2);

}  // namespace
