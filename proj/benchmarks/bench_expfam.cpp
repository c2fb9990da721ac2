#include <benchmark/benchmark.h>

#include "stochep/expfam.hpp"

using namespace stochep;

namespace {

NaturalParams member(int d) {
  const Family f = Family::gaussian_dense(d);
  Matrix prec = Matrix::Identity(d, d);
  for (int k = 0; k + 1 < d; ++k) prec(k, k + 1) = prec(k + 1, k) = 0.3;
  return {f, pack_natural(f, Vector::Ones(d), prec)};
}

void BM_ForwardMap(benchmark::State& state) {
  const NaturalParams e = member(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward_map(e));
}
BENCHMARK(BM_ForwardMap)->DenseRange(1, 8, 1);

void BM_BackwardMap(benchmark::State& state) {
  const MeanParams m = forward_map(member(static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(backward_map(m));
}
BENCHMARK(BM_BackwardMap)->DenseRange(1, 8, 1);

void BM_JvpBackward(benchmark::State& state) {
  const MeanParams m = forward_map(member(static_cast<int>(state.range(0))));
  const Vector v = Vector::Ones(m.family.dim_s());
  for (auto _ : state) benchmark::DoNotOptimize(jvp_backward(m, v));
}
BENCHMARK(BM_JvpBackward)->DenseRange(2, 8, 2);

void BM_FisherMean(benchmark::State& state) {
  const MeanParams m = forward_map(member(static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(fisher_mean(m));
}
BENCHMARK(BM_FisherMean)->DenseRange(2, 8, 2);

void BM_LogPartition(benchmark::State& state) {
  const NaturalParams e = member(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(log_partition(e));
}
BENCHMARK(BM_LogPartition)->DenseRange(2, 8, 2);

}  // namespace
