// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gradcheck.hpp"
#include "misfit/ablation.hpp"
#include "misfit/attention.hpp"
#include "misfit/cli.hpp"
#include "misfit/config.hpp"
#include "misfit/fourier.hpp"
#include "misfit/log.hpp"
#include "misfit/losses.hpp"
#include "misfit/pipeline.hpp"
#include "misfit/style.hpp"
#include "misfit/toy.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace misfit;
using testing::random_tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double wrap(double a) {
    const double d = std::remainder(a, 2.0 * M_PI);
    return std::abs(d);
}

Outcome spectral() {
    Rng rng(101);
    double round_trip = 0.0, vs_oracle = 0.0, parseval = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor x = random_tensor({16, 16}, rng);
        const ComplexGrid f = dft2(x);
        round_trip = std::max(round_trip, max_abs_diff(idft2(f), x));
        const auto ref = oracle::dft2(x.values(), 16, 16);
        double energy_x = 0.0, energy_f = 0.0;
        for (std::size_t i = 0; i < 256; ++i) {
            vs_oracle = std::max(vs_oracle, std::abs(std::complex<double>(f.re[i], f.im[i]) - ref[i]));
            energy_x += x[i] * x[i];
            energy_f += f.re[i] * f.re[i] + f.im[i] * f.im[i];
        }
        parseval = std::max(parseval, std::abs(energy_f / 256.0 - energy_x) / energy_x);
    }
    return {round_trip < 1e-9 && vs_oracle < 1e-9 && parseval < 1e-6,
            fmt::format("round trip {:.1e}, oracle {:.1e}, Parseval {:.1e}", round_trip, vs_oracle, parseval)};
}

Outcome style_endpoints() {
    Rng rng(102);
    bool identity = true;
    double amp = 0.0, phase = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor src = random_tensor({16, 16, 3}, rng, 0, 255);
        const std::vector<Tensor> targets{random_tensor({16, 16, 3}, rng, 0, 255),
                                          random_tensor({16, 16, 3}, rng, 0, 255)};
        const auto profile = target_amplitude_profile(targets);
        identity = identity && stylize_unclamped(src, profile, 0.0).image == src;
        const auto out = decompose(stylize_unclamped(src, profile, 1.0).image), in = decompose(src);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < 256; ++i) {
                amp = std::max(amp, std::abs(out.channels[c].amplitude[i] - profile.channels[c][i]));
                if (out.channels[c].amplitude[i] > 1e-9) {
                    phase = std::max(phase, wrap(out.channels[c].phase[i] - in.channels[c].phase[i]));
                }
            }
        }
    }
    return {identity && amp < 1e-6 && phase < 1e-6,
            fmt::format("beta 0 identity {}, beta 1 amplitude {:.1e}, phase {:.1e}", identity, amp, phase)};
}

Outcome attention_algebra() {
    Rng rng(103);
    double row_sum = 0.0, collapse = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t heads = 1 + rng.below(3), d = heads * (1 + rng.below(4));
        const std::size_t rows = 1 + rng.below(4), cols = 1 + rng.below(4);
        std::vector<Tensor> w;
        for (int i = 0; i < 4; ++i) {
            w.push_back(random_tensor({d, d}, rng));
            w.push_back(random_tensor({d}, rng));
        }
        const AttentionWeights aw{w[0], w[1], w[2], w[3], w[4], w[5], w[6], w[7], heads};
        const TokenGrid rgb{rows, cols, random_tensor({rows * cols, d}, rng, -2, 2)};
        const TokenGrid dep{rows, cols, random_tensor({rows * cols, d}, rng, -2, 2)};
        std::vector<Tensor> probs;
        mha_keyswap(rgb, dep, aw, &probs);
        for (const auto& p : probs) {
            for (std::size_t i = 0; i < p.dim(0); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < p.dim(1); ++j) s += p.at(i, j);
                row_sum = std::max(row_sum, std::abs(s - 1.0));
            }
        }
        collapse = std::max(collapse, max_abs_diff(mha_keyswap(rgb, rgb, aw).values, mha_self(rgb, aw).values));
    }
    const Tensor eye({2, 2}, std::vector<double>{1, 0, 0, 1}), zero({2});
    const AttentionWeights id{eye, zero, eye, zero, eye, zero, eye, zero, 1};
    const Tensor y = attention_forward(eye, eye, eye, id);
    const double e = std::exp(1.0 / std::sqrt(2.0)), p = e / (e + 1.0);
    const double hand = std::max({std::abs(y.at(0, 0) - p), std::abs(y.at(0, 1) - (1 - p)),
                                  std::abs(y.at(1, 0) - (1 - p)), std::abs(y.at(1, 1) - p)});
    return {row_sum < 1e-12 && collapse < 1e-12 && hand < 1e-9,
            fmt::format("row sums {:.1e}, equal streams {:.1e}, hand case {:.1e}", row_sum, collapse, hand)};
}

Outcome gradient_fidelity() {
    Rng rng(104);
    const auto params = ModelParams::initialize(testing::tiny_encoder(FusionMode::key_swap), 7);
    const Tensor rgb = random_tensor({8, 8, 3}, rng, 0, 1);
    const Tensor depth = random_tensor({8, 8}, rng, 0, 1);
    double worst = 0.0;
    std::string parts;
    for (auto kind : {testing::LossKind::supervised, testing::LossKind::masked, testing::LossKind::depth_entropy}) {
        const testing::LossFixture loss(kind, 8, 8, 3, 11);
        const auto a = testing::audit_gradients(params, rgb, depth, loss);
        worst = std::max({worst, a.param_rel_error, a.rgb_rel_error, a.depth_rel_error});
        parts += fmt::format("{} {:.1e}; ", testing::loss_name(kind), a.param_rel_error);
    }
    return {worst < 1e-4, parts + fmt::format("worst incl. inputs {:.1e}", worst)};
}

PseudoLabel fixture(std::vector<int> labels, std::vector<double> conf) {
    PseudoLabel pl{LabelGrid(1, labels.size()), Tensor({1, conf.size()}, conf)};
    pl.labels.values = std::move(labels);
    return pl;
}

Outcome filter_semantics() {
    const FilterConfig cfg{0.9, 0.66, FilterScope::per_class};
    BinaryGrid valid(1, 2, 1);
    valid.values[1] = 0;
    const auto pass_reject = selection_mask(fixture({0, 1}, {0.95, 0.99}), valid, cfg);
    const auto cut = selection_mask(fixture({2, 2, 2}, {0.5, 0.6, 0.7}), BinaryGrid(1, 3, 1), cfg);
    const bool exact = pass_reject.keep.values == std::vector<std::uint8_t>{1, 0} &&
                       cut.keep.values == std::vector<std::uint8_t>{0, 1, 1};

    Rng rng(105);
    bool monotone = true;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t h = 1 + rng.below(12), w = 1 + rng.below(12);
        const auto pl = pseudo_labels(ProbabilityMap::from_logits(random_tensor({h, w, 4}, rng, -3, 3)));
        BinaryGrid v(h, w);
        for (auto& x : v.values) x = rng.bernoulli(0.8);
        const auto scope = trial % 2 ? FilterScope::global : FilterScope::per_class;
        BinaryGrid prev(h, w, 1);
        for (double tau : {0.5, 0.7, 0.9, 0.99}) {
            const auto m = selection_mask(pl, v, {tau, 0.66, scope});
            for (std::size_t i = 0; i < m.keep.size(); ++i) monotone = monotone && !(m.keep.values[i] && !prev.values[i]);
            prev = m.keep;
        }
    }
    return {exact && monotone, fmt::format("fixtures exact {}, monotone in tau {}", exact, monotone)};
}

Outcome loss_identities() {
    Rng rng(106);
    double uniform = 0.0;
    for (std::size_t c = 2; c <= 8; ++c) {
        LabelGrid lab(3, 3);
        for (auto& v : lab.values) v = static_cast<int>(rng.below(c));
        uniform = std::max(uniform, std::abs(supervised_ce(Tensor({3, 3, c}), lab).value - std::log(double(c))));
    }
    bool bounds = true;
    const auto p = ProbabilityMap::from_logits(random_tensor({100, 1000, 5}, rng, -10, 10));
    const Tensor entropies = entropy_map(p);
    for (double h : entropies.data()) bounds = bounds && h >= 0.0 && h <= std::log(5.0) + 1e-12;

    const auto q = ProbabilityMap::from_logits(random_tensor({6, 6, 4}, rng, -3, 3));
    const Tensor h = entropy_map(q);
    double mean = 0.0;
    for (double v : h.data()) mean += v;
    mean /= 36.0;
    const double constant = std::abs(depth_entropy_loss(q, Tensor({6, 6}, 12.5), BinaryGrid(6, 6, 1)).value - mean);

    Tensor half({1, 2, 2}, 0.5);
    const double two = std::abs(
        depth_entropy_loss(ProbabilityMap::checked(half), Tensor({1, 2}, std::vector<double>{40.0, 20.0}),
                           BinaryGrid(1, 2, 1))
            .value -
        0.75 * std::log(2.0));
    return {uniform < 1e-9 && bounds && constant < 1e-12 && two < 1e-12,
            fmt::format("uniform CE {:.1e}, entropy bounds {}, constant disparity {:.1e}, two-pixel {:.1e}", uniform,
                        bounds, constant, two)};
}

RunConfig benchmark_config() { return load_run_config(std::string(MISFIT_SOURCE_DIR) + "/configs/toy.json"); }

struct Benchmark {
    double rgb_baseline = 0.0, key_swap_source = 0.0, full = 0.0, no_entropy = 0.0;
};

Benchmark run_benchmark() {
    const RunConfig cfg = benchmark_config();
    const auto source = generate_split(cfg.toy, ToyDomain::source, cfg.n_source);
    const auto target = generate_split(cfg.toy, ToyDomain::target, cfg.n_target);
    AblationGrid grid;
    grid.seeds = {0, 1, 2, 3, 4};
    grid.cells = {
        {FusionMode::rgb_only, false, false, false},
        {FusionMode::key_swap, false, false, false},
        {FusionMode::key_swap, true, true, true},
        {FusionMode::key_swap, true, true, false},
    };
    const auto summary = summarize(run_ablation_matrix(grid, source, target, cfg.adapt, [](const AblationRecord& r) {
        std::cout << "  " << r.cell.label() << " seed " << r.seed << " mIoU "
                  << fmt::format("{:.4f}", r.eval.miou.value_or(0.0)) << std::endl;
    }));
    return {summary[0].median_miou, summary[1].median_miou, summary[2].median_miou, summary[3].median_miou};
}

Outcome source_freeness() {
    ToySceneSpec spec;
    spec.image_size = 16;
    AdaptConfig cfg;
    cfg.encoder = testing::tiny_encoder();
    cfg.encoder.num_classes = kToyClasses;
    cfg.epochs = 1;
    cfg.adapt_epochs = 2;
    cfg.ema_period = 1;
    cfg.profile_samples = 2;
    auto source = generate_split(spec, ToyDomain::source, 4);
    const auto target = generate_split(spec, ToyDomain::target, 4).without_labels();
    const auto pre = pretrain_source(source, build_style_profiles(target, 2), cfg);
    source.poison();
    try {
        const auto r = adapt_target(target, pre.params, cfg);
        return {r.steps > 0 && r.params.all_finite(), fmt::format("adapted {} steps with a poisoned source", r.steps)};
    } catch (const std::exception& e) {
        return {false, e.what()};
    }
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

Outcome reproducibility() {
    testing::TempDir dir("acceptance_repro");
    {
        std::ofstream f(dir / "cfg.json");
        f << R"({"toy": {"image_size": 16}, "n_source": 4, "n_target": 4, "epochs": 1, "adapt_epochs": 1,
                 "batch_size": 2, "profile_samples": 2,
                 "encoder": {"patch_size": 2, "stage_dims": [8, 8], "decoder_dim": 8},
                 "ablation": {"style": [true], "self_training": [false, true], "entropy": [true]}})";
    }
    std::string first, second;
    for (auto* target : {&first, &second}) {
        const auto out = dir / (target == &first ? "a.ndjson" : "b.ndjson");
        std::ostringstream sink_out, sink_err;
        const int code = run_cli({"misfit", "ablate", "--config", (dir / "cfg.json").string(), "--seed", "3",
                                  "--out", out.string()},
                                 sink_out, sink_err);
        if (code != kExitOk) return {false, "ablate exited with " + std::to_string(code) + ": " + sink_err.str()};
        *target = slurp(out);
    }
    const bool same = !first.empty() && first == second;
    return {same, fmt::format("{} bytes, identical {}", first.size(), same)};
}

}  // namespace

int main() {
    if (!std::getenv("MISFIT_LOG")) setenv("MISFIT_LOG", "error", 1);
    configure_logging();

    int failures = 0;
    const auto report = [&](int id, const std::string& name, double limit_s, const std::function<Outcome()>& run) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = limit_s <= 0.0 || secs < limit_s;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::cout << fmt::format("criterion {:>2} {:<24} {}  ({:.1f}s{}) {}", id, name, pass ? "PASS" : "FAIL", secs,
                                 in_time ? "" : ", over time limit", o.detail)
                  << std::endl;
    };

    report(1, "spectral correctness", 5, spectral);
    report(2, "style endpoints", 5, style_endpoints);
    report(3, "attention algebra", 0, attention_algebra);
    report(4, "gradient fidelity", 120, gradient_fidelity);
    report(5, "filter semantics", 0, filter_semantics);
    report(6, "loss identities", 0, loss_identities);

    Benchmark bench;
    std::string bench_error;
    const auto bench_start = std::chrono::steady_clock::now();
    try {
        bench = run_benchmark();
    } catch (const std::exception& e) {
        bench_error = e.what();
    }
    const double bench_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - bench_start).count();
    report(7, "end-to-end trend", 0, [&]() -> Outcome {
        if (!bench_error.empty()) return {false, bench_error};
        const bool gain = bench.full - bench.rgb_baseline >= 0.05;
        const bool ordered = bench.full >= bench.no_entropy;
        const bool in_time = bench_secs < 1800.0;
        return {gain && ordered && in_time,
                fmt::format("median full {:.4f}, rgb source-only {:.4f}, full minus entropy {:.4f}, benchmark {:.0f}s",
                            bench.full, bench.rgb_baseline, bench.no_entropy, bench_secs)};
    });
    report(8, "fusion ablation trend", 0, [&]() -> Outcome {
        if (!bench_error.empty()) return {false, bench_error};
        return {bench.key_swap_source >= bench.rgb_baseline,
                fmt::format("median source-only key_swap {:.4f}, rgb_only {:.4f}", bench.key_swap_source,
                            bench.rgb_baseline)};
    });
    report(9, "source-freeness", 0, source_freeness);
    report(10, "reproducibility", 0, reproducibility);

    std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures)) << std::endl;
    return failures == 0 ? 0 : 1;
}
