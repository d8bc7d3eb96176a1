#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "airexo/kernels.hpp"

using namespace airexo;
using namespace airexo::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

template <Exec E>
void BM_SquaredDistances(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0)), dim = 16;
  const auto rows = random_values(n * dim, 1);
  const auto q = random_values(dim, 2);
  std::vector<double> out(n);
  for (auto _ : state) {
    squared_distances(E, rows, dim, q, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <Exec E>
void BM_PushOut(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Point2> base(n);
  for (auto& p : base) p = {u(rng), u(rng)};
  std::vector<Footprint> fps;
  for (int i = 0; i < 14; ++i) fps.push_back({{u(rng), u(rng)}, {u(rng), u(rng)}, 0.04});
  const Bounds2 bounds{-0.6, 0.6, -0.6, 0.6};
  for (auto _ : state) {
    auto pts = base;
    benchmark::DoNotOptimize(push_out(E, pts, fps, bounds, 3));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <bool Omp>
void BM_CapsulePairs(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Capsule> caps(n);
  for (auto& c : caps) c = {{u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}, 0.05};
  std::vector<double> out(n * n);
  for (auto _ : state) {
    if constexpr (Omp) {
      capsule_pair_distances_omp(caps, caps, out);
    } else {
      capsule_pair_distances_serial(caps, caps, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

}  // namespace

BENCHMARK(BM_SquaredDistances<Exec::kSerial>)->Arg(1000)->Arg(100000);
BENCHMARK(BM_SquaredDistances<Exec::kOpenMP>)->Arg(1000)->Arg(100000);
BENCHMARK(BM_PushOut<Exec::kSerial>)->Arg(80)->Arg(10000);
BENCHMARK(BM_PushOut<Exec::kOpenMP>)->Arg(80)->Arg(10000);
BENCHMARK(BM_CapsulePairs<false>)->Arg(14)->Arg(256);
BENCHMARK(BM_CapsulePairs<true>)->Arg(14)->Arg(256);

BENCHMARK_MAIN();
