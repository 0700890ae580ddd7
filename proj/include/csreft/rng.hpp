#pragma once

#include <cmath>
#include <cstdint>

namespace csreft {

// Counter-based pseudo-random generator.
//
// The u64 stream is fully specified here so that seeds reproduce across
// platforms and language bindings:
//
//   output(i) = mix(seed + (i+1) * 0x9E3779B97F4A7C15)   for i = 0,1,2,...
//
// where mix is the SplitMix64 finalizer:
//
//   z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9;
//   z ^= z >> 27;  z *= 0x94D049BB133111EB;
//   z ^= z >> 31;
//
// uniform() maps a u64 draw to (0,1) as ((x >> 11) + 0.5) * 2^-53, which
// never returns an exact 0 or 1. gaussian() consumes two uniform draws per
// call (Box-Muller, cosine branch) and keeps no cached spare, so the draw
// count per call is fixed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform on the open interval (0,1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal deviate.
    double gaussian() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Uniform integer in [0, n), n >= 1. Uses 64-bit modulo; the bias is
    // negligible for the desk-scale ranges used here (n << 2^32).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace csreft
