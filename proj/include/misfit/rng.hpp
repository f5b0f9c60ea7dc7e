#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace misfit {

/// Seeded pseudorandom stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Real-valued draws are derived here rather than through the
/// standard distributions, whose algorithms are implementation-defined, so a
/// seed yields the same stream on every conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t below(std::uint64_t n);
    /// Standard normal via Box-Muller; one draw per call, no cached spare.
    double normal();
    double normal(double mean, double sigma) { return mean + sigma * normal(); }
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

/// Stable sub-seed for an indexed child stream (per image, per seed cell).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace misfit
