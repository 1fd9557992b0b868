#pragma once

#include <cstdint>
#include <initializer_list>

#include "riskratio/math.hpp"

namespace riskratio {

// SplitMix64 finalizer; full-period bijective mixer on 64-bit words.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Counter-based generator: the i-th output is a pure function of (key, i),
// so streams derived from (seed, path...) are reproducible regardless of
// evaluation order and independent across distinct paths. Replicate- and
// scenario-level streams are derived rather than sequenced, which is what
// makes parallel schedules (and reruns) bit-identical.
class SplitMix {
public:
    explicit SplitMix(std::uint64_t key) : key_(key) {}

    static SplitMix derive(std::uint64_t seed,
                           std::initializer_list<std::uint64_t> path) {
        std::uint64_t k = mix64(seed ^ 0x8BADF00D5EEDull);
        for (std::uint64_t salt : path) {
            k = mix64(k ^ mix64(salt ^ 0xD1B54A32D192ED03ull));
        }
        return SplitMix(k);
    }

    std::uint64_t next_u64() {
        return mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ull);
    }

    // Uniform on [0,1): top 53 bits, exactly representable.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0,1): shifted lattice, never returns an endpoint, so it is
    // safe to feed through inverse-CDF transforms.
    double uniform_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() { return normal_quantile(uniform_open()); }

    // Unbiased integer on [0, bound) via the multiply-shift reduction.
    std::uint32_t uniform_int(std::uint32_t bound) {
        const auto wide = static_cast<unsigned __int128>(next_u64()) * bound;
        return static_cast<std::uint32_t>(wide >> 64);
    }

    // CDF-walk inversion; one uniform per draw keeps the stream layout
    // independent of n and p. Cost is O(n p) on average, fine for the
    // ensemble sizes this library targets.
    int binomial(int n, double p) {
        if (n <= 0 || p <= 0.0) return 0;
        if (p >= 1.0) return n;
        const double u = uniform();
        double pmf = std::exp(n * std::log1p(-p));
        const double odds = p / (1.0 - p);
        double cum = pmf;
        int k = 0;
        while (u >= cum && k < n) {
            pmf *= odds * static_cast<double>(n - k) / static_cast<double>(k + 1);
            cum += pmf;
            ++k;
        }
        return k;
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace riskratio
