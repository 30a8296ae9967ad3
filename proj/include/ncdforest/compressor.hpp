#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ncdforest/bytes.hpp"
#include "ncdforest/corpus.hpp"

namespace ncdforest {

enum class Backend { Lzma, Deflate, Bwt };

std::string_view backend_name(Backend backend);
Backend parse_backend(std::string_view text);

/// Compressor selection. Output bytes are a pure function of (input, config).
///
/// - Lzma: raw LZMA2, single-threaded. `level` is the xz preset (0-9). The
///   dictionary is `dictionary_bytes`, shrunk to the smallest power of two
///   covering the input (never below 4 KiB); inputs longer than
///   `dictionary_bytes` are rejected because part of them would fall outside
///   the window.
/// - Deflate: zlib. `level` 0-9; the window is the largest power of two
///   <= dictionary_bytes within zlib's 512 B..32 KiB range.
/// - Bwt: bzip2. `level` is the block size in 100 kB units (1-9).
struct CompressorConfig {
    Backend backend = Backend::Lzma;
    int level = 6;
    std::uint64_t dictionary_bytes = 64ull << 20;

    /// Stable string identifying the config, e.g. "lzma:l6:d67108864".
    std::string fingerprint() const;
    /// Throws InvalidArgument on out-of-range fields.
    void validate() const;
    /// Longest input the backend accepts under this config.
    std::uint64_t max_input_bytes() const;
};

/// Compressed length of `data` with no caching.
std::uint64_t compress_uncached(ByteView data, const CompressorConfig& cfg);

/// Persistent Z(x) store keyed by "<sha256 hex>/<config fingerprint>".
///
/// File format (text, one record per line):
///   ncdforest-zcache 1
///   <key> <decimal z_size>
/// Later lines win on duplicate keys. Safe for concurrent use; writes are
/// appended in insertion order when flush() runs.
class SizeCache {
public:
    SizeCache() = default;
    /// Loads `path` if it exists; flush() appends there.
    explicit SizeCache(std::filesystem::path path);
    ~SizeCache();
    SizeCache(const SizeCache&) = delete;
    SizeCache& operator=(const SizeCache&) = delete;

    std::optional<std::uint64_t> lookup(const std::string& key) const;
    void store(const std::string& key, std::uint64_t z_size);
    void flush();
    std::size_t size() const;

private:
    std::filesystem::path path_;
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, std::uint64_t> entries_;
    std::vector<std::string> pending_;
};

struct CompressionRecord {
    std::string sample_id;
    std::string config_fingerprint;
    std::uint64_t z_size = 0;
    std::uint64_t raw_size = 0;
};

/// Z(x) measurement through a cache. Thread-safe.
class Compressor {
public:
    explicit Compressor(CompressorConfig cfg, std::shared_ptr<SizeCache> cache = nullptr);

    const CompressorConfig& config() const { return cfg_; }
    const std::string& fingerprint() const { return fingerprint_; }

    /// Z(data), cached by content digest. Throws if data exceeds the
    /// backend limit, instructing to raise dictionary_bytes.
    std::uint64_t compressed_size(ByteView data);
    /// Z(x) for a sample; uses the ingest digest as cache key so a warm
    /// cache never touches the file.
    std::uint64_t compressed_size(const Sample& sample);
    CompressionRecord record(const Sample& sample);

    std::uint64_t cache_hits() const { return hits_.load(); }
    std::uint64_t cache_misses() const { return misses_.load(); }
    SizeCache& cache() { return *cache_; }

private:
    std::uint64_t lookup_or_compute(const std::string& digest, ByteView data,
                                    const std::filesystem::path* source);

    CompressorConfig cfg_;
    std::string fingerprint_;
    std::shared_ptr<SizeCache> cache_;
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> misses_{0};
};

/// z_size / raw_size, unclamped. Throws InvalidArgument for empty samples.
double compressibility_ratio(const Sample& sample, Compressor& compressor);
double compressibility_ratio(ByteView data, Compressor& compressor);

/// Worst observed violation of one normal-compressor axiom, in bytes.
struct AxiomDeviation {
    std::string axiom;
    double max_deviation_bytes = 0.0;
    std::vector<std::size_t> witness;  // suite indices of the worst tuple
};

struct NormalityReport {
    std::string config_fingerprint;
    std::uint64_t empty_input_bytes = 0;  // Z(empty): header overhead
    AxiomDeviation idempotency;      // Z(xx) - Z(x)
    AxiomDeviation monotonicity;     // max(0, Z(x) - Z(xy))
    AxiomDeviation symmetry;         // |Z(xy) - Z(yx)|
    AxiomDeviation distributivity;   // max(0, Z(xy) + Z(z) - Z(xz) - Z(yz))
};

/// Evaluates the four axioms over all singles, ordered pairs and ordered
/// triples of `suite` (triples are O(m^3) compressions; keep suites small).
NormalityReport normality_report(Compressor& compressor, const std::vector<Bytes>& suite);

std::string normality_report_json(const NormalityReport& report);

struct SelfDistancePoint {
    std::uint64_t size = 0;
    std::optional<double> ncd;  // NCD(x, x)
    std::string error;          // set when ncd is empty
};

/// NCD(x, x) over seeded mixed-content files of the requested sizes.
std::vector<SelfDistancePoint> self_distance_curve(const std::vector<std::uint64_t>& sizes,
                                                   Compressor& compressor, std::uint64_t seed);

}  // namespace ncdforest
