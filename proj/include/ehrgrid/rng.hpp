#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ehrgrid {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic draws on top of mt19937_64 (whose output sequence the
// standard pins down exactly). Distribution shaping is done by hand because
// std::*_distribution implementations differ across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] via rejection-free modulo (bias negligible
    // for the small ranges used here and fully deterministic).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(engine_() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; one value per call, the pair's second half discarded to
    // keep the draw count independent of call sites.
    double normal(double mean, double stddev) {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        return mean + stddev * z;
    }

    // Inverse-CDF; log1p keeps precision near u = 0.
    double exponential(double mean) { return -mean * std::log1p(-uniform()); }

    // Knuth's product method, capped so a pathological draw cannot stall.
    int poisson(double lambda, int cap = 16) {
        double l = std::exp(-lambda);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > l && k <= cap);
        return k - 1;
    }

    // Index into a cumulative weight table.
    std::size_t categorical(const std::vector<double>& cumulative) {
        double u = uniform();
        for (std::size_t i = 0; i < cumulative.size(); ++i)
            if (u < cumulative[i]) return i;
        return cumulative.size() - 1;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace ehrgrid
