#pragma once

#include <cmath>
#include <cstdint>

namespace caracal {

// Seedable 64-bit-state generator (splitmix64). Every stochastic choice in
// the library (init, batching, sampling, tests) draws from one of these, so
// a run is fully determined by its seeds. The exact update is documented in
// the README so results can be reproduced without checkpoints.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next_u64() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller, cosine branch only: each call consumes
    // exactly two uniforms. No cached spare, so the draw sequence is a pure
    // function of the call count.
    double normal() noexcept {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return r * std::cos(6.283185307179586 * u2);
    }

    // Uniform integer in [0, n). Plain modulo; the bias at 2^64 scale is
    // irrelevant for corpus offsets and sampling.
    std::uint64_t below(std::uint64_t n) noexcept { return next_u64() % n; }

  private:
    std::uint64_t state_;
};

} // namespace caracal
