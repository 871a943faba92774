// Serial loops vs OpenMP for the parallel kernels, plus the naive references.
//   ./mnngp_bench --benchmark_filter=Kernel

#include <benchmark/benchmark.h>

#include <random>

#include "mnngp/fq_table.hpp"
#include "mnngp/kernel.hpp"
#include "mnngp/mc_validation.hpp"

using namespace mnngp;

namespace {

Execution mode(const benchmark::State& state) {
  return state.range(0) ? Execution::parallel : Execution::serial;
}

Matrix random_inputs(Eigen::Index n, Eigen::Index d) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  Matrix X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = normal(rng);
  }
  return X;
}

const FqTable& table(int q) {
  static const FqTable t2 = build_table(2, 501, QuadratureGrid(8.0, 401));
  static const FqTable t3 = build_table(3, 501, QuadratureGrid(8.0, 401));
  return q == 2 ? t2 : t3;
}

void BM_BuildTable(benchmark::State& state) {
  const QuadratureGrid grid(8.0, 801);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_table(3, 64, grid, QuadratureScheme::product, mode(state)));
  }
}
BENCHMARK(BM_BuildTable)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_ArgmaxSums(benchmark::State& state) {
  const QuadratureGrid grid(8.0, 201);
  for (auto _ : state) {
    if (state.range(0)) {
      benchmark::DoNotOptimize(argmax_sums(3, 0.3, grid));
    } else {
      benchmark::DoNotOptimize(reference::argmax_sums(3, 0.3, grid));
    }
  }
  state.SetLabel(state.range(0) ? "fast" : "reference");
}
BENCHMARK(BM_ArgmaxSums)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_KernelMatrix(benchmark::State& state) {
  const Matrix X = random_inputs(state.range(1), 64);
  const KernelParams p{3, 9, 0.2, 1.5};
  const FqTable& t = table(3);
  for (auto _ : state) benchmark::DoNotOptimize(kernel_matrix(X, p, t, mode(state)));
}
BENCHMARK(BM_KernelMatrix)
    ->ArgsProduct({{0, 1}, {128, 512}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

void BM_KernelMatrixReference(benchmark::State& state) {
  const Matrix X = random_inputs(state.range(0), 64);
  const KernelParams p{3, 9, 0.2, 1.5};
  const FqTable& t = table(3);
  for (auto _ : state) benchmark::DoNotOptimize(reference::kernel_matrix(X, X, p, t));
}
BENCHMARK(BM_KernelMatrixReference)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_EmpiricalKernel(benchmark::State& state) {
  const Matrix X = random_inputs(8, 16);
  const NetworkArch arch = NetworkArch::uniform(16, 256, 2, 3, 0.1, 2.0);
  const auto method = state.range(1) ? SamplerMethod::gram : SamplerMethod::explicit_weights;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        empirical_kernel(arch, X, 512, 3, method, OutputEstimator::sampled, mode(state)));
  }
  state.SetLabel(state.range(1) ? "gram" : "explicit");
}
BENCHMARK(BM_EmpiricalKernel)
    ->ArgsProduct({{0, 1}, {0, 1}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

void BM_McOracle(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(mc_oracle_fq(4, 0.5, 1 << 20, 9, mode(state)));
}
BENCHMARK(BM_McOracle)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
