#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "misfit/errors.hpp"
#include "misfit/losses.hpp"
#include "misfit/numerics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace misfit;
using testing::random_tensor;

namespace {

ProbabilityMap probs_of(std::size_t h, std::size_t w, std::vector<std::vector<double>> pixels) {
    const std::size_t c = pixels.front().size();
    Tensor t({h, w, c});
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        for (std::size_t k = 0; k < c; ++k) t[i * c + k] = pixels[i][k];
    }
    return ProbabilityMap::checked(std::move(t));
}

/// Pseudo-labels with chosen labels and confidences (the probability map itself is not needed by the mask).
PseudoLabel fixture(std::vector<int> labels, std::vector<double> conf) {
    PseudoLabel pl{LabelGrid(1, labels.size()), Tensor({1, conf.size()}, conf)};
    pl.labels.values = std::move(labels);
    return pl;
}

BinaryGrid all_valid(std::size_t h, std::size_t w) { return BinaryGrid(h, w, 1); }

std::vector<double> pixel(const ProbabilityMap& p, std::size_t y, std::size_t x) {
    std::vector<double> v(p.classes());
    for (std::size_t c = 0; c < v.size(); ++c) v[c] = p.at(y, x, c);
    return v;
}

}  // namespace

TEST_CASE("probability maps") {
    CHECK_THROWS_AS(ProbabilityMap::checked(Tensor({1, 1, 2}, std::vector<double>{0.5, 0.6})), InvalidInput);
    CHECK_THROWS_AS(ProbabilityMap::checked(Tensor({1, 1, 2}, std::vector<double>{1.5, -0.5})), InvalidInput);
    Rng rng(40);
    const auto p = ProbabilityMap::from_logits(random_tensor({3, 4, 5}, rng, -50, 50));
    for (std::size_t y = 0; y < 3; ++y) {
        for (std::size_t x = 0; x < 4; ++x) {
            const auto v = pixel(p, y, x);
            double s = 0.0;
            for (double q : v) s += q;
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("pseudo labels") {
    const auto pl = pseudo_labels(probs_of(1, 2, {{0.1, 0.7, 0.2, 0.0}, {0.25, 0.25, 0.25, 0.25}}));
    CHECK(pl.labels.values == std::vector<int>{1, 0});
    CHECK(pl.confidence[0] == 0.7);
    CHECK(pl.confidence[1] == 0.25);

    Rng rng(41);
    const auto p = ProbabilityMap::from_logits(random_tensor({8, 8, 3}, rng, -2, 2));
    const auto r = pseudo_labels(p);
    for (std::size_t y = 0; y < 8; ++y) {
        for (std::size_t x = 0; x < 8; ++x) {
            const auto v = pixel(p, y, x);
            std::size_t best = 0;
            for (std::size_t c = 1; c < v.size(); ++c) {
                if (v[c] > v[best]) best = c;
            }
            CHECK(r.labels.at(y, x) == static_cast<int>(best));
            CHECK(r.confidence.at(y, x) == v[best]);
        }
    }
}

TEST_CASE("selection mask fixtures") {
    const FilterConfig cfg{0.9, 0.66, FilterScope::per_class};
    // Confidence above tau with valid depth is kept; invalid depth always rejects.
    {
        const auto m = selection_mask(fixture({0, 1}, {0.95, 0.99}), BinaryGrid(1, 2, 1), cfg);
        CHECK(m.keep.values[0] == 1);
    }
    {
        BinaryGrid valid(1, 2, 1);
        valid.values[1] = 0;
        const auto m = selection_mask(fixture({0, 1}, {0.95, 0.99}), valid, cfg);
        CHECK(m.keep.values == std::vector<std::uint8_t>{1, 0});
        CHECK(m.rejected_depth == 1);
    }
    // One class, confidences {0.5, 0.6, 0.7}: the top 66% are the upper two.
    {
        const auto m = selection_mask(fixture({2, 2, 2}, {0.5, 0.6, 0.7}), all_valid(1, 3), cfg);
        CHECK(m.keep.values == std::vector<std::uint8_t>{0, 1, 1});
        CHECK(m.kept == 2);
        CHECK(m.rejected_confidence == 1);
        CHECK(m.kept + m.rejected_confidence + m.rejected_depth == 3);
    }
    // A class with fewer than three pixels only passes through tau.
    {
        const auto m = selection_mask(fixture({0, 0, 1, 1, 1}, {0.5, 0.95, 0.5, 0.6, 0.7}), all_valid(1, 5), cfg);
        CHECK(m.keep.values == std::vector<std::uint8_t>{0, 1, 0, 1, 1});
    }
    // Global scope ranks across classes.
    {
        const auto m = selection_mask(fixture({0, 1, 2}, {0.5, 0.6, 0.7}), all_valid(1, 3),
                                      {0.9, 0.66, FilterScope::global});
        CHECK(m.keep.values == std::vector<std::uint8_t>{0, 1, 1});
    }
    CHECK_THROWS_AS(selection_mask(fixture({0, 1}, {0.5, 0.6}), all_valid(1, 3), cfg), InvalidInput);
    CHECK_THROWS_AS((FilterConfig{1.5, 0.66, FilterScope::global}.validate()), ConfigError);
    CHECK_THROWS_AS((FilterConfig{0.9, 0.0, FilterScope::global}.validate()), ConfigError);
}

TEST_CASE("selection mask properties") {
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t h = 1 + rng.below(8), w = 1 + rng.below(8);
        const auto pl = pseudo_labels(ProbabilityMap::from_logits(random_tensor({h, w, 4}, rng, -3, 3)));
        BinaryGrid valid(h, w);
        for (auto& v : valid.values) v = rng.bernoulli(0.7);
        const double frac = rng.uniform(0.05, 1.0);
        const auto scope = rng.bernoulli(0.5) ? FilterScope::per_class : FilterScope::global;
        std::size_t prev = h * w + 1;
        for (double tau : {0.5, 0.7, 0.9, 0.99}) {
            const auto m = selection_mask(pl, valid, {tau, frac, scope});
            CHECK(m.kept <= prev);
            prev = m.kept;
            CHECK(m.kept + m.rejected_depth + m.rejected_confidence == h * w);
            std::size_t kept = 0;
            for (std::size_t i = 0; i < h * w; ++i) {
                if (m.keep.values[i]) {
                    CHECK(valid.values[i] == 1);
                    ++kept;
                }
                if (valid.values[i] && pl.confidence[i] > tau) CHECK(m.keep.values[i] == 1);
            }
            CHECK(kept == m.kept);
        }
    }
}

TEST_CASE("masked cross-entropy") {
    // One-hot predictions on the pseudo-labels.
    Tensor logits({1, 3, 3}, -60.0);
    const auto pl = fixture({0, 2, 1}, {1, 1, 1});
    for (std::size_t i = 0; i < 3; ++i) logits[i * 3 + static_cast<std::size_t>(pl.labels.values[i])] = 60.0;
    SelectionMask full{BinaryGrid(1, 3, 1), 3, 0, 0};
    CHECK(masked_ce(logits, pl, full).value < 1e-9);

    SelectionMask empty{BinaryGrid(1, 3, 0), 0, 0, 3};
    const auto e = masked_ce(logits, pl, empty);
    CHECK(e.value == 0.0);
    CHECK(e.warning);
    for (double g : e.grad.data()) CHECK(g == 0.0);

    const auto uniform = masked_ce(Tensor({1, 3, 5}), fixture({0, 4, 2}, {0.2, 0.2, 0.2}), full);
    CHECK(std::abs(uniform.value - std::log(5.0)) < 1e-9);

    // Masked-out pixels receive no gradient.
    Rng rng(43);
    const Tensor z = random_tensor({1, 3, 3}, rng);
    SelectionMask partial{BinaryGrid(1, 3, 1), 2, 0, 1};
    partial.keep.values[1] = 0;
    const auto g = masked_ce(z, pl, partial);
    for (std::size_t c = 0; c < 3; ++c) CHECK(g.grad[3 + c] == 0.0);
    const auto pv = masked_ce(ProbabilityMap::from_logits(z), pl, partial);
    CHECK(std::abs(pv.value - g.value) < 1e-12);
}

TEST_CASE("entropy map") {
    const auto p = probs_of(1, 3, {{0.25, 0.25, 0.25, 0.25}, {0, 0, 1, 0}, {0.5, 0.5, 0, 0}});
    const Tensor h = entropy_map(p);
    CHECK(std::abs(h[0] - std::log(4.0)) < 1e-12);
    CHECK(h[1] == 0.0);
    CHECK(std::abs(h[2] - std::log(2.0)) < 1e-12);
}

TEST_CASE("entropy bounds on random pixels") {
    Rng rng(44);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 2 + rng.below(6);
        const auto p = ProbabilityMap::from_logits(random_tensor({10, 10, c}, rng, -20, 20));
        const Tensor h = entropy_map(p);
        for (std::size_t i = 0; i < 100; ++i) {
            CHECK(h[i] >= 0.0);
            CHECK(h[i] <= std::log(static_cast<double>(c)) + 1e-12);
            CHECK(std::abs(h[i] - oracle::entropy(pixel(p, i / 10, i % 10))) < 1e-12);
        }
    }
}

TEST_CASE("depth-weighted entropy") {
    Rng rng(45);
    const auto p = ProbabilityMap::from_logits(random_tensor({4, 4, 3}, rng, -2, 2));
    const Tensor h = entropy_map(p);
    BinaryGrid valid(4, 4, 1);
    valid.values[3] = valid.values[7] = 0;
    Tensor d({4, 4}, 17.0);
    d[3] = d[7] = 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
        if (valid.values[i]) mean += h[i];
    }
    mean /= 14.0;
    CHECK(std::abs(depth_entropy_loss(p, d, valid).value - mean) < 1e-12);

    const auto none = depth_entropy_loss(p, Tensor({4, 4}), BinaryGrid(4, 4, 0));
    CHECK(none.value == 0.0);
    CHECK(none.warning);

    // Two valid uniform pixels with disparities {d, d/2}.
    const auto two = probs_of(1, 2, {{0.5, 0.5}, {0.5, 0.5}});
    const auto v = depth_entropy_loss(two, Tensor({1, 2}, std::vector<double>{40.0, 20.0}), BinaryGrid(1, 2, 1));
    CHECK(std::abs(v.value - 0.75 * std::log(2.0)) < 1e-12);

    CHECK_THROWS_AS(depth_entropy_loss(two, Tensor({1, 2}, std::vector<double>{-1.0, 2.0}), BinaryGrid(1, 2, 1)),
                    InvalidInput);
}

TEST_CASE("depth-weighted entropy weights") {
    // Weighted loss equals the direct mean of (d/max d)·H over valid pixels and never exceeds the plain mean.
    Rng rng(46);
    for (int trial = 0; trial < 30; ++trial) {
        const auto p = ProbabilityMap::from_logits(random_tensor({5, 5, 4}, rng, -3, 3));
        Tensor d({5, 5});
        BinaryGrid valid(5, 5);
        double dmax = 0.0;
        for (std::size_t i = 0; i < 25; ++i) {
            d[i] = rng.bernoulli(0.3) ? 0.0 : rng.uniform(0.5, 90.0);
            valid.values[i] = d[i] > 0.0;
            if (valid.values[i]) dmax = std::max(dmax, d[i]);
        }
        const Tensor h = entropy_map(p);
        double expect = 0.0, plain = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < 25; ++i) {
            if (!valid.values[i]) continue;
            const double w = d[i] / dmax;
            CHECK(w >= 0.0);
            CHECK(w <= 1.0);
            expect += w * h[i];
            plain += h[i];
            ++n;
        }
        if (n == 0) continue;
        const double got = depth_entropy_loss(p, d, valid).value;
        CHECK(std::abs(got - expect / static_cast<double>(n)) < 1e-12);
        CHECK(got <= plain / static_cast<double>(n) + 1e-12);
    }
}

TEST_CASE("supervised cross-entropy") {
    Tensor onehot({1, 2, 3}, -60.0);
    onehot[1] = onehot[3] = 60.0;
    LabelGrid labels(1, 2);
    labels.values = {1, 0};
    CHECK(supervised_ce(onehot, labels).value < 1e-9);
    CHECK(std::abs(supervised_ce(Tensor({2, 2, 5}), LabelGrid(2, 2, 3)).value - std::log(5.0)) < 1e-12);

    LabelGrid ignored(1, 2, kIgnoreLabel);
    const auto all = supervised_ce(onehot, ignored);
    CHECK(all.value == 0.0);
    CHECK(all.warning);

    // Half the pixels ignored equals the CE over the other half alone.
    Rng rng(47);
    const Tensor z = random_tensor({2, 4, 3}, rng, -3, 3);
    LabelGrid lab(2, 4);
    double manual = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
        if (i % 2 == 0) {
            lab.values[i] = kIgnoreLabel;
            continue;
        }
        lab.values[i] = static_cast<int>(rng.below(3));
        std::vector<double> row(z.raw() + i * 3, z.raw() + i * 3 + 3);
        manual -= std::log(oracle::softmax(row)[static_cast<std::size_t>(lab.values[i])]);
    }
    CHECK(std::abs(supervised_ce(z, lab).value - manual / 4.0) < 1e-12);
    CHECK(std::abs(supervised_ce(ProbabilityMap::from_logits(z), lab).value - manual / 4.0) < 1e-12);

    LabelGrid out_of_range(1, 1, 7);
    CHECK_THROWS_AS(supervised_ce(Tensor({1, 1, 3}), out_of_range), InvalidInput);
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(48);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor z = random_tensor({4, 4, 3}, rng, -2, 2);
        const auto pl = pseudo_labels(ProbabilityMap::from_logits(random_tensor({4, 4, 3}, rng)));
        BinaryGrid valid(4, 4);
        Tensor d({4, 4});
        for (std::size_t i = 0; i < 16; ++i) {
            d[i] = rng.bernoulli(0.2) ? 0.0 : rng.uniform(1, 50);
            valid.values[i] = d[i] > 0;
        }
        const auto mask = selection_mask(pl, valid, {0.5, 0.66, FilterScope::per_class});
        LabelGrid lab(4, 4);
        for (auto& v : lab.values) v = rng.bernoulli(0.2) ? kIgnoreLabel : static_cast<int>(rng.below(3));

        const auto check = [&](auto loss) {
            const auto analytic = loss(z).grad;
            const auto numeric = finite_diff_grad(
                [&](std::span<const double> p) { return loss(Tensor(z.shape(), {p.begin(), p.end()})).value; },
                z.values(), 1e-5);
            CHECK(testing::max_rel_error(analytic.values(), numeric) < 1e-4);
        };
        check([&](const Tensor& x) { return masked_ce(x, pl, mask); });
        check([&](const Tensor& x) { return depth_entropy_loss(x, d, valid); });
        check([&](const Tensor& x) { return supervised_ce(x, lab); });
    }
}
