#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ncdforest/bytes.hpp"
#include "ncdforest/corpus.hpp"
#include "ncdforest/rng.hpp"

namespace testing {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    TempDir() {
        std::string pattern = (fs::temp_directory_path() / "ncdforest-test-XXXXXX").string();
        if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

inline ncdforest::Bytes bytes_of(std::string_view text) {
    return ncdforest::Bytes(text.begin(), text.end());
}

inline ncdforest::Bytes seeded_random(std::size_t n, std::uint64_t seed) {
    ncdforest::Rng rng(seed);
    ncdforest::Bytes out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng.below(256));
    return out;
}

struct Blob {
    std::string name;
    ncdforest::Label label;
    ncdforest::Bytes content;
};

// Writes each blob under dir/<label>/<name> and ingests them via a manifest.
inline ncdforest::CorpusSet corpus_from(const fs::path& dir, const std::vector<Blob>& blobs) {
    std::string manifest = "path,label,sha256\n";
    for (const Blob& b : blobs) {
        const std::string rel = std::string(ncdforest::label_name(b.label)) + "/" + b.name;
        ncdforest::write_file(dir / rel, b.content);
        manifest += rel + "," + std::string(ncdforest::label_name(b.label)) + ",\n";
    }
    ncdforest::write_text(dir / "manifest.csv", manifest);
    return ncdforest::ingest_manifest(dir / "manifest.csv").corpus;
}

inline ncdforest::CorpusSet corpus_from(const TempDir& dir, const std::vector<Blob>& blobs) {
    return corpus_from(dir.path(), blobs);
}

}  // namespace testing
