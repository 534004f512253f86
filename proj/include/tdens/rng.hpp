#pragma once

#include <cmath>
#include <cstdint>

namespace tdens {

/// Portable 64-bit xorshift* generator. Every random draw in this project
/// goes through this class so that datasets and fits reproduce bit for bit
/// across platforms and languages.
///
/// State update (state is never zero):
///   x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27;
///   output = x * 0x2545F4914F6CDD1D  (mod 2^64)
///
/// Stream seeding:
///   state = seed XOR (0x9E3779B97F4A7C15 * (stream + 1))  (mod 2^64)
///   if state == 0: state = 0x9E3779B97F4A7C15
///
/// The same equations are spelled out in the README; re-implementations must
/// match them exactly.
class Xorshift64Star {
public:
    explicit Xorshift64Star(std::uint64_t seed, std::uint64_t stream = 0) {
        state_ = seed ^ (UINT64_C(0x9E3779B97F4A7C15) * (stream + 1));
        if (state_ == 0) state_ = UINT64_C(0x9E3779B97F4A7C15);
    }

    std::uint64_t next_u64() {
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * UINT64_C(0x2545F4914F6CDD1D);
    }

    /// Uniform double in [0, 1), 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    /// Uniform integer in [0, n). Uses plain modulo reduction; the bias is
    /// negligible for the small ranges used here and keeps the mapping
    /// trivial to reproduce elsewhere.
    std::uint64_t uniform_int(std::uint64_t n) {
        return next_u64() % n;
    }

    /// Standard normal via Box-Muller. Consumes exactly two draws and
    /// returns only the cosine branch, so the draw sequence stays fixed.
    double gaussian() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        const double u2 = uniform01();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    /// Poisson count by Knuth's product-of-uniforms method. Fine for the
    /// small rates used by the scene generator.
    int poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        const double limit = std::exp(-lambda);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform01();
        } while (p > limit);
        return k - 1;
    }

private:
    std::uint64_t state_;
};

} // namespace tdens
