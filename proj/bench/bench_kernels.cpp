// Parallel kernels against their serial reference versions.
//
//   ./deep2bsde_bench --benchmark_filter=Conv
//   OMP_NUM_THREADS=4 ./deep2bsde_bench

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "deep2bsde/kernels.hpp"
#include "deep2bsde/problems.hpp"
#include "deep2bsde/sde_path.hpp"

using namespace deep2bsde;
using kernels::Trans;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (double& e : v) e = normal(gen);
  return v;
}

// Batch x width times width x width, the multiscale hidden layer shape.
template <bool Reference>
void Gemm(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto width = static_cast<std::size_t>(state.range(1));
  const auto a = normals(batch * width, 1), b = normals(width * width, 2);
  std::vector<double> c(batch * width);
  for (auto _ : state) {
    if constexpr (Reference) {
      kernels::reference::gemm(Trans::no, Trans::yes, batch, width, width, 1.0, a, b, 0.0, c);
    } else {
      kernels::gemm(Trans::no, Trans::yes, batch, width, width, 1.0, a, b, 0.0, c);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch * width * width));
}

// c -> c channel convolution over a batch of s x s images.
template <bool Reference>
void Conv(benchmark::State& state) {
  const std::size_t batch = 64, channels = 32;
  const auto side = static_cast<std::size_t>(state.range(0));
  const std::size_t pixels = side * side;
  const auto input = normals(batch * channels * pixels, 3);
  const auto kern = normals(channels * channels * 9, 4);
  const auto bias = normals(channels, 5);
  std::vector<double> cols(batch * pixels * channels * 9), tmp(batch * pixels * channels), out(tmp.size());
  for (auto _ : state) {
    if constexpr (Reference) {
      kernels::reference::conv3x3(batch, channels, channels, side, kern, bias, input, out);
    } else {
      kernels::im2col3x3(batch, channels, side, input, cols);
      kernels::gemm(Trans::no, Trans::yes, batch * pixels, channels, channels * 9, 1.0, cols, kern, 0.0, tmp);
    }
    benchmark::DoNotOptimize(out.data());
    benchmark::DoNotOptimize(tmp.data());
  }
}

template <bool Reference>
void BatchedMatvec(benchmark::State& state) {
  const std::size_t batch = 64;
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto mats = normals(batch * d * d, 6), vecs = normals(batch * d, 7);
  std::vector<double> out(batch * d);
  for (auto _ : state) {
    if constexpr (Reference) {
      kernels::reference::batched_matvec(batch, d, mats, vecs, out);
    } else {
      kernels::batched_matvec(batch, d, mats, vecs, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Reference>
void Simulate(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const ProblemSpec p = bsb(d);
  const TimeGrid grid = uniform_grid(p.horizon, p.steps);
  const BrownianBatch w = sample_brownian(1, 256, grid, d);
  for (auto _ : state) {
    PathBatch paths = Reference ? simulate_serial(p, grid, w) : simulate(p, grid, w);
    benchmark::DoNotOptimize(paths.states.data().data());
  }
}

}  // namespace

BENCHMARK(Gemm<false>)->Name("Gemm/parallel")->Args({64, 50})->Args({64, 128})->Args({1024, 128});
BENCHMARK(Gemm<true>)->Name("Gemm/reference")->Args({64, 50})->Args({64, 128})->Args({1024, 128});
BENCHMARK(Conv<false>)->Name("Conv/im2col_gemm")->Arg(4)->Arg(16);
BENCHMARK(Conv<true>)->Name("Conv/reference")->Arg(4)->Arg(16);
BENCHMARK(BatchedMatvec<false>)->Name("BatchedMatvec/parallel")->Arg(20)->Arg(100);
BENCHMARK(BatchedMatvec<true>)->Name("BatchedMatvec/reference")->Arg(20)->Arg(100);
BENCHMARK(Simulate<false>)->Name("Simulate/parallel")->Arg(100);
BENCHMARK(Simulate<true>)->Name("Simulate/serial")->Arg(100);

BENCHMARK_MAIN();
