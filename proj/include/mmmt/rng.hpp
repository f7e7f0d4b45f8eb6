#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mmmt {

/// splitmix64 generator. Every random draw in the library goes through this
/// type so that synthetic data and dropout masks are reproducible bit for bit.
class RngState {
public:
    explicit constexpr RngState(std::uint64_t seed = 0) noexcept : state_(seed) {}

    constexpr std::uint64_t next_u64() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) built from the top 53 bits.
    constexpr double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; consumes exactly two draws.
    double normal() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, bound). Multiply-shift, bias below 2^-64 * bound.
    std::uint64_t below(std::uint64_t bound) noexcept {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
    }

    constexpr std::uint64_t state() const noexcept { return state_; }

    /// Independent stream for a named purpose, derived from a base seed.
    static constexpr RngState derive(std::uint64_t seed, std::uint64_t stream) noexcept {
        RngState mixer(seed ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
        return RngState(mixer.next_u64());
    }

private:
    std::uint64_t state_;
};

}  // namespace mmmt
