#pragma once

#include <cstdint>
#include <filesystem>

#include "ncdforest/bytes.hpp"
#include "ncdforest/corpus.hpp"
#include "ncdforest/rng.hpp"

namespace ncdforest::synth {

Bytes random_bytes(std::size_t n, Rng& rng);

/// Pseudo-words drawn from one fixed vocabulary shared by every call, so
/// independent text blocks still share substrings.
Bytes text_like(std::size_t n, Rng& rng);

/// A short random motif repeated with sparse single-byte edits.
Bytes repetitive(std::size_t n, Rng& rng);

/// Words from a small per-call vocabulary of random byte strings;
/// compressible but sharing no content or byte statistics with other calls.
Bytes private_words(std::size_t n, std::size_t vocabulary, Rng& rng);

/// Alternating text, random and repetitive blocks of 256-4096 bytes.
Bytes mixed_content(std::size_t n, Rng& rng);

/// Copy of `base` with about `fraction` of its bytes overwritten in short
/// runs of random bytes.
Bytes mutate(ByteView base, double fraction, Rng& rng);

struct FamilyCorpusSpec {
    std::size_t per_family = 200;
    std::size_t templates = 5;
    double min_mutation = 0.05;
    double max_mutation = 0.15;
    std::size_t min_size = 4096;
    std::size_t max_size = 8192;
    std::uint64_t seed = 1;
};

/// Family A (Positive): mutated copies of a few templates.
/// Family B (Negative): independent random-plus-text mixes.
/// Files land in dir/malware and dir/benign; dir/manifest.csv lists them.
CorpusSet write_family_corpus(const std::filesystem::path& dir, const FamilyCorpusSpec& spec);

struct RatioCorpusSpec {
    std::size_t per_class = 100;
    std::size_t stub_min = 2048;
    std::size_t stub_max = 6144;
    std::size_t payload_min = 4096;
    std::size_t payload_max = 12288;
    std::size_t plain_min = 4096;
    std::size_t plain_max = 40960;
    std::uint64_t seed = 1;
};

/// Positive: "packed" files, a private-vocabulary stub followed by random
/// bytes. Negative: plain private-vocabulary files. Compressed sizes overlap
/// between the classes, so the compressibility ratio is the clean separator.
CorpusSet write_ratio_corpus(const std::filesystem::path& dir, const RatioCorpusSpec& spec);

}  // namespace ncdforest::synth
