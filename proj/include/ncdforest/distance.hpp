#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ncdforest/compressor.hpp"
#include "ncdforest/corpus.hpp"

namespace ncdforest {

/// (Z(xy) - min(Z(x), Z(y))) / max(Z(x), Z(y)); not clamped.
double ncd_from_sizes(std::uint64_t zx, std::uint64_t zy, std::uint64_t zxy);

/// NCD of two samples. Z(xy) is taken over the concatenation with the
/// smaller id first. Throws Error naming the pair if the concatenation
/// exceeds the compressor's input limit.
double ncd(const Sample& x, const Sample& y, Compressor& compressor);

/// Same, for in-memory content; x is concatenated first.
double ncd(ByteView x, ByteView y, Compressor& compressor);

/// Smallest NCD reachable from single-file sizes alone:
/// 1 - min(zx, zy) / max(zx, zy). Throws InvalidArgument on zero sizes.
double ncd_lower_bound(std::uint64_t zx, std::uint64_t zy);

enum class EntryStatus : std::uint8_t { Exact = 0, Pruned = 1, Pending = 2 };

struct MatrixEntry {
    EntryStatus status = EntryStatus::Pending;
    double value = 0.0;  // NCD when Exact, lower bound when Pruned

    friend bool operator==(const MatrixEntry&, const MatrixEntry&) = default;
};

/// Symmetric NCD matrix stored as the upper triangle including the diagonal.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    DistanceMatrix(std::vector<std::string> ids, std::string config_fingerprint,
                   std::optional<double> prune_threshold);

    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::string& config_fingerprint() const { return fingerprint_; }
    const std::optional<double>& prune_threshold() const { return threshold_; }

    /// N(N+1)/2 unordered pairs, diagonal included.
    std::size_t pair_count() const { return entries_.size(); }
    static std::size_t slot(std::size_t i, std::size_t j, std::size_t n);

    const MatrixEntry& at(std::size_t i, std::size_t j) const;
    MatrixEntry& at(std::size_t i, std::size_t j);
    const std::vector<MatrixEntry>& entries() const { return entries_; }
    std::vector<MatrixEntry>& entries() { return entries_; }

    std::size_t count(EntryStatus status) const;
    bool complete() const { return count(EntryStatus::Pending) == 0; }

    friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

private:
    std::vector<std::string> ids_;
    std::string fingerprint_;
    std::optional<double> threshold_;
    std::vector<MatrixEntry> entries_;
};

struct MatrixOptions {
    std::optional<double> prune_threshold;
    unsigned threads = 0;
    /// Partial results are loaded from and saved to this file, so an
    /// interrupted run resumes where it stopped.
    std::optional<std::filesystem::path> checkpoint;
};

/// Pairwise NCD over the corpus (ordered by id). With a threshold, pairs
/// whose lower bound is >= threshold are stored as Pruned(bound) and their
/// concatenation is never compressed.
DistanceMatrix pairwise_matrix(const CorpusSet& samples, Compressor& compressor,
                               const MatrixOptions& options = {});

struct SavingsPoint {
    double threshold = 0.0;
    std::uint64_t skipped = 0;
    std::uint64_t total = 0;
    double fraction_skipped = 0.0;
};

/// Fraction of the N(N+1)/2 pairs whose lower bound reaches each threshold.
/// Needs only single-file sizes.
std::vector<SavingsPoint> savings_curve(const CorpusSet& samples, Compressor& compressor,
                                        const std::vector<double>& thresholds,
                                        unsigned threads = 0);

struct BoundViolation {
    std::string id_a;
    std::string id_b;
    double lower_bound = 0.0;
    double ncd = 0.0;
};

/// Exact entries whose lower bound exceeds the NCD by more than `tolerance`.
std::vector<BoundViolation> audit_lower_bound(const DistanceMatrix& matrix,
                                              const CorpusSet& samples, Compressor& compressor,
                                              double tolerance = 0.02);

/// Binary container, little-endian:
///   "NCDM" | u32 version | u64 N | N x (u32 len, id bytes)
///   | u32 len, fingerprint | u8 has_threshold | f64 threshold
///   | N(N+1)/2 x (u8 tag, f64 value)   row-major upper triangle
void write_matrix(const DistanceMatrix& matrix, const std::filesystem::path& path);
DistanceMatrix read_matrix(const std::filesystem::path& path);

/// Lossless CSV `id_a,id_b,status,value` (values printed with 17 digits).
void write_matrix_csv(const DistanceMatrix& matrix, const std::filesystem::path& path);

void write_savings_csv(const std::vector<SavingsPoint>& curve, const std::filesystem::path& path);

}  // namespace ncdforest
