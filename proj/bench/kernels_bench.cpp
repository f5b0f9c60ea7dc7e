#include <benchmark/benchmark.h>

#include <vector>

#include "misfit/encoder.hpp"
#include "misfit/fourier.hpp"
#include "misfit/kernels.hpp"
#include "misfit/rng.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    misfit::Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

template <bool Reference>
void BM_GemmNN(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        if constexpr (Reference) {
            misfit::kernels::reference::gemm_nn(a, b, c, n, n, n, false);
        } else {
            misfit::kernels::gemm_nn(a, b, c, n, n, n, false);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_GemmNN<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_GemmNN<true>)->Arg(64)->Arg(256);

template <bool Reference>
void BM_DftLines(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto re = random_values(n * n, 3);
    std::vector<double> out_re(n * n), out_im(n * n);
    for (auto _ : state) {
        if constexpr (Reference) {
            misfit::kernels::reference::dft_lines(re.data(), nullptr, out_re.data(), out_im.data(), n, n, n, 1, false);
        } else {
            misfit::kernels::dft_lines(re.data(), nullptr, out_re.data(), out_im.data(), n, n, n, 1, false);
        }
        benchmark::DoNotOptimize(out_re.data());
    }
}
BENCHMARK(BM_DftLines<false>)->Arg(64);
BENCHMARK(BM_DftLines<true>)->Arg(64);

void BM_Dft2(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const misfit::Tensor img({n, n}, random_values(n * n, 4));
    for (auto _ : state) benchmark::DoNotOptimize(misfit::dft2(img));
}
BENCHMARK(BM_Dft2)->Arg(64);

void BM_EncoderStep(benchmark::State& state) {
    misfit::EncoderConfig cfg;
    const auto params = misfit::ModelParams::initialize(cfg, 7);
    const misfit::Tensor rgb({64, 64, 3}, random_values(64 * 64 * 3, 5));
    const misfit::Tensor depth({64, 64}, random_values(64 * 64, 6));
    for (auto _ : state) {
        auto fwd = misfit::encoder_forward_cached(rgb, depth, params);
        auto g = misfit::encoder_backward(fwd.logits, fwd.cache, params);
        benchmark::DoNotOptimize(g.params);
    }
}
BENCHMARK(BM_EncoderStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
