#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace hsomrl
{
    using Rng = std::mt19937_64;

    // Distribution helpers are written out rather than taken from <random>: the
    // standard distributions are implementation-defined, and datasets and
    // checkpoints must be byte-identical across toolchains for a given seed.

    /// Independent seed for (stream, index) from a base seed (splitmix64 mixing).
    std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01(Rng &rng);
    double uniform(Rng &rng, double lo, double hi);
    /// Uniform integer in [0, n); n must be > 0.
    std::size_t uniform_index(Rng &rng, std::size_t n);
}
