#include "hsomrl/rng.h"

#include "hsomrl/errors.h"

namespace hsomrl
{
    namespace
    {
        std::uint64_t splitmix64(std::uint64_t x)
        {
            x += 0x9e3779b97f4a7c15ULL;
            x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
            x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
            return x ^ (x >> 31);
        }
    }

    std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
    {
        return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
    }

    double uniform01(Rng &rng)
    {
        return static_cast<double>(rng() >> 11) * 0x1.0p-53;
    }

    double uniform(Rng &rng, double lo, double hi)
    {
        return lo + (hi - lo) * uniform01(rng);
    }

    std::size_t uniform_index(Rng &rng, std::size_t n)
    {
        if (n == 0) {
            throw PreconditionError("uniform_index: empty range");
        }
        const std::uint64_t range = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % range);
        std::uint64_t x = rng();
        while (x >= limit) {
            x = rng();
        }
        return static_cast<std::size_t>(x % range);
    }
}
