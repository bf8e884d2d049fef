#pragma once

#include <cstdint>
#include <limits>

#include "explorex/hash.hpp"

namespace explorex {

/// Small deterministic generator (SplitMix64 stream).
///
/// All distribution code lives here instead of <random> distributions, whose
/// outputs are implementation-defined; replaying a seed must give the same
/// decisions on every toolchain.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit constexpr Rng(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept {
        return std::numeric_limits<result_type>::max();
    }

    constexpr result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix64(state_);
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform01() noexcept {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) noexcept;

    bool bernoulli(double p) noexcept { return uniform01() < p; }

    double standard_normal() noexcept;

    /// Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
    double gamma(double shape) noexcept;

    /// Beta(a, b) as a ratio of gammas; a, b > 0.
    double beta(double a, double b) noexcept;

private:
    std::uint64_t state_;
};

}  // namespace explorex
