#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "sdcl/errors.hpp"

namespace sdcl {

/// Seeded generator with hand-rolled distributions so that streams are
/// reproducible independent of the standard library's distribution
/// implementations. Distinct `stream` ids derive decorrelated generators
/// from one experiment seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : engine_(mix(seed + 0x9E3779B97F4A7C15ULL * (stream + 1))) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) {
        // Rejection sampling kills the modulo bias.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (pairs cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Full generator state as text, exact enough to resume a stream
    /// mid-flight (the cached Box-Muller spare is kept bit-for-bit).
    std::string save_state() const {
        std::ostringstream oss;
        oss << engine_ << ' ' << (have_spare_ ? 1 : 0) << ' '
            << std::bit_cast<std::uint64_t>(spare_);
        return oss.str();
    }

    void load_state(const std::string& text) {
        std::istringstream iss(text);
        std::mt19937_64 engine;
        int have = 0;
        std::uint64_t bits = 0;
        if (!(iss >> engine >> have >> bits))
            throw ParseError("Rng::load_state: malformed state text");
        engine_ = engine;
        have_spare_ = have != 0;
        spare_ = std::bit_cast<double>(bits);
    }

  private:
    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace sdcl
