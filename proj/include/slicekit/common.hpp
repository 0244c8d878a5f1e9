#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace slicekit {

/// Seeded random source used everywhere in the toolkit.
///
/// Distributions are implemented here rather than through <random>'s
/// distribution classes, whose output sequences are implementation-defined.
/// Only the mt19937_64 engine (fully specified by the standard) is used.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (spare_) {
            const double v = *spare_;
            spare_.reset();
            return v;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Uniform integer in [0, n), unbiased.
    std::size_t index(std::size_t n) {
        if (n == 0) {
            throw std::invalid_argument("Rng::index requires n > 0");
        }
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t v = engine_();
        while (v >= limit) {
            v = engine_();
        }
        return static_cast<std::size_t>(v % bound);
    }

    /// Uniform integer in [lo, hi] inclusive.
    int integer(int lo, int hi) { return lo + static_cast<int>(index(static_cast<std::size_t>(hi - lo + 1))); }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stable 64-bit FNV-1a of a string.
inline std::uint64_t hash_string(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Independent sub-stream seed for (seed, tag, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    return mix64(mix64(seed ^ hash_string(tag)) + index);
}

/// Raised when a configuration or input violates a documented precondition
/// that the caller could have checked (bad paths, bad flags, bad files).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace slicekit
