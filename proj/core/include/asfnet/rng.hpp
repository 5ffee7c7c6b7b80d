#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace asfnet {

/// Deterministic random source. mt19937_64 has a bit-exact standard-mandated
/// sequence; the distribution mappings are hand-rolled here because the
/// std::*_distribution algorithms are implementation-defined and golden-file
/// reproducibility depends on stable draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of randomness.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] via rejection-free 128-bit multiply-shift.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        const auto wide = static_cast<unsigned __int128>(engine_()) * span;
        return lo + static_cast<std::int64_t>(wide >> 64);
    }

    // Standard normal via Box-Muller; draws two uniforms per pair.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Stable stream derivation: one master seed plus a label yields an
    // independent deterministic stream (FNV-1a over the label).
    static std::uint64_t derive_seed(std::uint64_t seed, const std::string& label) {
        std::uint64_t h = 1469598103934665603ull ^ seed;
        for (unsigned char ch : label) {
            h ^= ch;
            h *= 1099511628211ull;
        }
        return h;
    }

    static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
        return derive_seed(seed, "#" + std::to_string(index));
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace asfnet
