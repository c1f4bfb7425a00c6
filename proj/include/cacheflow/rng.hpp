#pragma once

// Seeded RNG stream. All randomness in the library flows through
// explicitly passed Rng instances; there is no global or wall-clock
// entropy anywhere. Normal draws use Box-Muller (one value per draw,
// no cached state) so streams are easy to reason about and replay.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace cacheflow {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1).
    double uniform() {
        // 53 random bits -> double, the standard mt19937_64 recipe.
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        // Box-Muller, cosine branch only. u1 in (0,1] avoids log(0).
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi_v<double> * u2);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling for an unbiased draw.
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % n;
    }

    std::uint64_t raw() { return gen_(); }

    // Derives an independent child stream; used to give deterministic
    // per-purpose streams from one master seed.
    Rng fork(std::uint64_t salt) {
        std::uint64_t s = gen_() ^ (salt * 0x9e3779b97f4a7c15ull);
        return Rng(s);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace cacheflow
