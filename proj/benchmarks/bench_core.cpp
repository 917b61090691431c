#include <benchmark/benchmark.h>

#include "stokesdg/dg_forms.hpp"
#include "stokesdg/mesh.hpp"

using namespace stokesdg;

static void BM_BuildCrisscross(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_crisscross(n));
  }
}
BENCHMARK(BM_BuildCrisscross)->Arg(3)->Arg(5);

static void BM_AssembleA(benchmark::State& state) {
  const TriangleMesh mesh = build_crisscross(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(assemble_a(mesh, 1, 6.0));
  }
}
BENCHMARK(BM_AssembleA)->Arg(3)->Arg(5);

BENCHMARK_MAIN();
