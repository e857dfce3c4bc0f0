// Serial reference vs OpenMP kernels, plus one whole-encoder forward.
// Run: build/bench/blum_bench [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include "blum/encoder.hpp"
#include "blum/kernels.hpp"
#include "blum/rng.hpp"

namespace kn = blum::kernels;
using blum::Mat;
using blum::Rng;

namespace {

Mat<float> random_mat(int r, int c, std::uint64_t seed) {
    Rng rng(seed);
    Mat<float> m(r, c);
    for (auto& v : m.d) v = static_cast<float>(rng.normal());
    return m;
}

void bm_matmul_serial(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Mat<float> a = random_mat(n, n, 1);
    const Mat<float> b = random_mat(n, n, 2);
    Mat<float> c(n, n);
    for (auto _ : state) {
        kn::serial::matmul(a.data(), b.data(), c.data(), n, n, n);
        benchmark::DoNotOptimize(c.data());
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

void bm_matmul_omp(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Mat<float> a = random_mat(n, n, 1);
    const Mat<float> b = random_mat(n, n, 2);
    Mat<float> c(n, n);
    for (auto _ : state) {
        kn::matmul(a.data(), b.data(), c.data(), n, n, n);
        benchmark::DoNotOptimize(c.data());
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

void bm_softmax_serial(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Mat<float> s = random_mat(n, n, 3);
    for (auto _ : state) {
        kn::serial::softmax_rows(s.data(), n, n);
        benchmark::DoNotOptimize(s.data());
    }
}

void bm_softmax_omp(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Mat<float> s = random_mat(n, n, 3);
    for (auto _ : state) {
        kn::softmax_rows(s.data(), n, n);
        benchmark::DoNotOptimize(s.data());
    }
}

void bm_encoder_forward(benchmark::State& state) {
    const int len = static_cast<int>(state.range(0));
    blum::encoder::ModelConfig cfg;
    cfg.vocab_size = 123;
    cfg.max_infer_len = 2048;
    auto params = blum::encoder::ModelParameters<float>::init(cfg, 11);
    Rng rng(4);
    std::vector<std::int32_t> tokens(static_cast<std::size_t>(len));
    for (auto& t : tokens) t = static_cast<std::int32_t>(rng.uniform_index(120));
    for (auto _ : state) {
        auto hidden = blum::encoder::forward<float>(params, tokens, {});
        benchmark::DoNotOptimize(hidden.data());
    }
}

}  // namespace

BENCHMARK(bm_matmul_serial)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_matmul_omp)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_softmax_serial)->Arg(128)->Arg(512);
BENCHMARK(bm_softmax_omp)->Arg(128)->Arg(512);
BENCHMARK(bm_encoder_forward)->Arg(32)->Arg(128)->Arg(512);

BENCHMARK_MAIN();
