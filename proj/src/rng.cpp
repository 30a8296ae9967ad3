#include "ncdforest/rng.hpp"

#include "ncdforest/error.hpp"

namespace ncdforest {

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) throw InvalidArgument("Rng::below: bound must be positive");
    // Largest multiple of bound representable in 64 bits; values at or above
    // it would bias the low residues.
    const std::uint64_t limit = -bound % bound;
    for (;;) {
        const std::uint64_t x = next();
        if (x >= limit) return x % bound;
    }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace ncdforest
