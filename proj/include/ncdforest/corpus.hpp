#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ncdforest {

enum class Label { Negative, Positive };

/// "malware" / "benign", the spellings used in manifests.
std::string_view label_name(Label label);
Label parse_label(std::string_view text);

struct Sample {
    std::string id;
    std::filesystem::path path;
    Label label = Label::Negative;
    std::uint64_t size_bytes = 0;
    std::string digest;  // hex SHA-256 of the content
};

/// Samples kept sorted by id; ids are unique.
class CorpusSet {
public:
    CorpusSet() = default;
    /// Sorts by id and rejects duplicate ids.
    CorpusSet(std::vector<Sample> samples, std::string provenance);

    const std::vector<Sample>& samples() const { return samples_; }
    const std::string& provenance() const { return provenance_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }

    const Sample* find(std::string_view id) const;
    /// Throws InvalidArgument for unknown ids.
    const Sample& at(std::string_view id) const;

    std::size_t count(Label label) const;
    std::vector<Sample> with_label(Label label) const;

private:
    std::vector<Sample> samples_;
    std::string provenance_;
};

CorpusSet merge(const CorpusSet& a, const CorpusSet& b);

struct SkippedFile {
    std::filesystem::path path;
    std::string reason;
};

struct IngestResult {
    CorpusSet corpus;
    std::vector<SkippedFile> skipped;
};

/// Every regular file below `dir` (recursively) becomes a Sample with id
/// "<label>/<relative path>". Unreadable files are skipped and reported.
IngestResult ingest_directory(const std::filesystem::path& dir, Label label);

/// CSV manifest with header `path,label,sha256` (sha256 may be empty).
/// Relative paths resolve against the manifest's directory; the id is the
/// path as written. Missing or unreadable files and digest mismatches are
/// skipped and reported; malformed rows throw with the row number.
IngestResult ingest_manifest(const std::filesystem::path& manifest);

/// Dispatches on whether `source` is a directory or a manifest file.
/// `label` applies to directories only; manifests carry their own labels.
IngestResult ingest(const std::filesystem::path& source, Label label);

/// Writes a manifest readable by ingest_manifest. Paths are written relative
/// to the manifest's directory when possible.
void write_manifest(const CorpusSet& corpus, const std::filesystem::path& manifest);

struct DuplicateRemoval {
    std::string kept_id;
    std::string removed_id;
    std::string reason;  // always "size+digest+bytes"
};

struct DedupeResult {
    CorpusSet corpus;
    std::vector<DuplicateRemoval> removed;
};

/// Keeps the smallest id of every group of byte-identical files. Candidates
/// are grouped by size, then digest, and merged only after a byte-by-byte
/// comparison. Throws Error if a file vanished or changed size since ingest.
DedupeResult dedupe(const CorpusSet& corpus);

void write_dedupe_report(const std::vector<DuplicateRemoval>& removed,
                         const std::filesystem::path& csv);

/// Seeded draw of n_per_label samples of each label. With replacement,
/// repeated draws of the same sample get ids suffixed "#2", "#3", ... so the
/// result stays a valid CorpusSet.
CorpusSet sample(const CorpusSet& corpus, std::size_t n_per_label, std::uint64_t seed,
                 bool with_replacement);

struct ExperimentSplit {
    std::vector<std::string> reference;
    std::vector<std::string> training;
    std::vector<std::string> test;
};

/// Per-label draw sizes for split_counts().
struct SplitCounts {
    std::size_t reference_negative = 0;
    std::size_t reference_positive = 0;
    std::size_t training_negative = 0;
    std::size_t training_positive = 0;
    std::size_t test_negative = 0;
    std::size_t test_positive = 0;
};

/// Label-balanced, pairwise-disjoint draw without replacement. Each size must
/// be even; half of each list is Negative, half Positive.
ExperimentSplit split(const CorpusSet& corpus, std::size_t n_ref, std::size_t n_train,
                      std::size_t n_test, std::uint64_t seed);

/// General form used for biased training draws. Each label's population is
/// shuffled once and consumed in order reference, training, test.
ExperimentSplit split_counts(const CorpusSet& corpus, const SplitCounts& counts,
                             std::uint64_t seed);

}  // namespace ncdforest
