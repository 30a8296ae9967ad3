#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace ncdforest {

/// Seeded generator used by every stochastic step.
///
/// The bit stream is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. The standard distributions are implementation-defined, so
/// bounded integers and reals are derived here with fixed formulas; the same
/// seed yields the same draws on every conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t bound);

    /// Uniform real in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Fisher-Yates shuffle driven by below().
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer over (base, stream). Used to derive independent
/// per-run / per-tree seeds so parallel and sequential execution agree.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace ncdforest
