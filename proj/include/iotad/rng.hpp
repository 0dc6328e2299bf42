#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace iotad {

// Seeded generator with distributions defined here rather than by the
// standard library, so sequences are identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);

    // Standard normal via Box-Muller (one value per call, no cached spare).
    double normal();

private:
    std::mt19937_64 engine_;
};

// SplitMix64 finalizer applied to (master, stream); gives independent
// substreams, e.g. one per tree.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace iotad
