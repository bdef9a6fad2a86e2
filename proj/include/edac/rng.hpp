#pragma once

#include <cstdint>
#include <random>

#include "edac/normal.hpp"

namespace edac {

// Deterministic RNG. mt19937_64 is fully specified by the standard and the
// distributions below are implemented here rather than via <random>'s
// distribution classes, whose output is implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t raw() { return gen_(); }

    // Uniform on [0, 1).
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform on [a, b).
    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Uniform integer in [0, n). Modulo bias is < n / 2^64.
    uint64_t below(uint64_t n) { return gen_() % n; }

    // Standard normal via inverse-CDF of a strictly interior uniform.
    double normal() {
        const double u = (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
        return inverse_norm_cdf(u);
    }

    // Derive an independent stream (e.g. per training run or per member).
    Rng split(uint64_t salt) {
        uint64_t s = raw() ^ (0x9e3779b97f4a7c15ULL * (salt + 1));
        return Rng(s);
    }

    bool operator==(const Rng& o) const { return gen_ == o.gen_; }

private:
    std::mt19937_64 gen_;
};

}  // namespace edac
