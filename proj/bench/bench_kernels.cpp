// Serial reference kernels against the OpenMP versions at encoder-sized shapes.
// Thread count follows OMP_NUM_THREADS / HSOMRL_THREADS.

#include <benchmark/benchmark.h>

#include "hsomrl/kernels.h"
#include "hsomrl/pipeline.h"
#include "hsomrl/rng.h"

namespace
{
    using hsomrl::Matrix;
    namespace kernels = hsomrl::kernels;

    Matrix random(std::size_t rows, std::size_t cols, std::uint64_t seed)
    {
        hsomrl::Rng rng(seed);
        Matrix m(rows, cols);
        for (double &v : m.data()) {
            v = hsomrl::uniform(rng, -1.0, 1.0);
        }
        return m;
    }

    // Rows are transitions in a batch (batch 256 x segment length ~40).
    template <Matrix (*Fn)(const Matrix &, const Matrix &)>
    void bm_matmul(benchmark::State &state)
    {
        const auto rows = static_cast<std::size_t>(state.range(0));
        const Matrix a = random(rows, 64, 1);
        const Matrix b = random(64, 64, 2);
        for (auto _ : state) {
            benchmark::DoNotOptimize(Fn(a, b));
        }
        state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
    }

    template <Matrix (*Fn)(const Matrix &, const Matrix &)>
    void bm_matmul_tn(benchmark::State &state)
    {
        const auto rows = static_cast<std::size_t>(state.range(0));
        const Matrix a = random(rows, 64, 3);
        const Matrix b = random(rows, 64, 4);
        for (auto _ : state) {
            benchmark::DoNotOptimize(Fn(a, b));
        }
        state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
    }

    template <Matrix (*Fn)(const Matrix &, const Matrix &)>
    void bm_matmul_nt(benchmark::State &state)
    {
        const auto rows = static_cast<std::size_t>(state.range(0));
        const Matrix a = random(rows, 64, 5);
        const Matrix b = random(64, 64, 6);
        for (auto _ : state) {
            benchmark::DoNotOptimize(Fn(a, b));
        }
        state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
    }

    template <Matrix (*Fn)(const Matrix &)>
    void bm_unary(benchmark::State &state)
    {
        const Matrix a = random(static_cast<std::size_t>(state.range(0)), 64, 7);
        for (auto _ : state) {
            benchmark::DoNotOptimize(Fn(a));
        }
        state.SetItemsProcessed(state.iterations() * state.range(0));
    }

    void bm_add_bias(benchmark::State &state, bool parallel)
    {
        const Matrix a = random(static_cast<std::size_t>(state.range(0)), 64, 8);
        const Matrix bias = random(1, 64, 9);
        for (auto _ : state) {
            benchmark::DoNotOptimize(parallel ? kernels::add_bias(a, bias) : kernels::serial::add_bias(a, bias));
        }
        state.SetItemsProcessed(state.iterations() * state.range(0));
    }
}

#define SIZES RangeMultiplier(4)->Range(256, 16384)->Unit(benchmark::kMicrosecond)

BENCHMARK(bm_matmul<kernels::serial::matmul>)->Name("matmul/serial")->SIZES;
BENCHMARK(bm_matmul<kernels::matmul>)->Name("matmul/openmp")->SIZES;
BENCHMARK(bm_matmul_tn<kernels::serial::matmul_tn>)->Name("matmul_tn/serial")->SIZES;
BENCHMARK(bm_matmul_tn<kernels::matmul_tn>)->Name("matmul_tn/openmp")->SIZES;
BENCHMARK(bm_matmul_nt<kernels::serial::matmul_nt>)->Name("matmul_nt/serial")->SIZES;
BENCHMARK(bm_matmul_nt<kernels::matmul_nt>)->Name("matmul_nt/openmp")->SIZES;
BENCHMARK(bm_unary<kernels::serial::tanh>)->Name("tanh/serial")->SIZES;
BENCHMARK(bm_unary<kernels::tanh>)->Name("tanh/openmp")->SIZES;
BENCHMARK(bm_unary<kernels::serial::column_sums>)->Name("column_sums/serial")->SIZES;
BENCHMARK(bm_unary<kernels::column_sums>)->Name("column_sums/openmp")->SIZES;
BENCHMARK_CAPTURE(bm_add_bias, serial, false)->Name("add_bias/serial")->SIZES;
BENCHMARK_CAPTURE(bm_add_bias, openmp, true)->Name("add_bias/openmp")->SIZES;

int main(int argc, char **argv)
{
    hsomrl::apply_thread_limit();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) {
        return 1;
    }
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
