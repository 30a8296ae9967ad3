#include "ncdforest/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "ncdforest/error.hpp"

namespace fs = std::filesystem;

namespace ncdforest::synth {
namespace {

const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> words = [] {
        Rng rng(0x5eedf00dull);
        std::vector<std::string> out;
        for (int i = 0; i < 512; ++i) {
            const auto len = 2 + rng.below(8);
            std::string w;
            for (std::uint64_t k = 0; k < len; ++k) w.push_back(static_cast<char>('a' + rng.below(26)));
            out.push_back(std::move(w));
        }
        return out;
    }();
    return words;
}

std::size_t uniform_size(std::size_t lo, std::size_t hi, Rng& rng) {
    if (hi < lo) throw InvalidArgument("synth: max size below min size");
    return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

std::string file_name(char prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%c_%04zu.bin", prefix, i);
    return buf;
}

}  // namespace

Bytes random_bytes(std::size_t n, Rng& rng) {
    Bytes out(n);
    for (std::size_t i = 0; i < n; i += 8) {
        const std::uint64_t v = rng.next();
        for (std::size_t b = 0; b < 8 && i + b < n; ++b) out[i + b] = static_cast<std::uint8_t>(v >> (8 * b));
    }
    return out;
}

Bytes text_like(std::size_t n, Rng& rng) {
    const auto& words = vocabulary();
    Bytes out;
    out.reserve(n + 16);
    while (out.size() < n) {
        // Cubing a uniform skews toward the front of the vocabulary.
        const double u = rng.uniform();
        const auto idx = static_cast<std::size_t>(u * u * u * static_cast<double>(words.size()));
        out.insert(out.end(), words[idx].begin(), words[idx].end());
        const auto punct = rng.below(16);
        out.push_back(punct == 0 ? '\n' : punct == 1 ? ',' : ' ');
    }
    out.resize(n);
    return out;
}

Bytes repetitive(std::size_t n, Rng& rng) {
    const Bytes motif = random_bytes(16 + static_cast<std::size_t>(rng.below(49)), rng);
    Bytes out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = motif[i % motif.size()];
        if (rng.below(100) == 0) out[i] = static_cast<std::uint8_t>(rng.below(256));
    }
    return out;
}

Bytes private_words(std::size_t n, std::size_t vocabulary, Rng& rng) {
    std::vector<Bytes> words(vocabulary);
    for (auto& w : words) w = random_bytes(4 + rng.below(9), rng);
    Bytes out;
    out.reserve(n + 16);
    while (out.size() < n) {
        const Bytes& w = words[rng.below(words.size())];
        out.insert(out.end(), w.begin(), w.end());
    }
    out.resize(n);
    return out;
}

Bytes mixed_content(std::size_t n, Rng& rng) {
    Bytes out;
    out.reserve(n);
    while (out.size() < n) {
        const std::size_t len = std::min<std::size_t>(n - out.size(), 256 + rng.below(3841));
        Bytes block;
        switch (rng.below(3)) {
            case 0: block = text_like(len, rng); break;
            case 1: block = random_bytes(len, rng); break;
            default: block = repetitive(len, rng); break;
        }
        out.insert(out.end(), block.begin(), block.end());
    }
    return out;
}

Bytes mutate(ByteView base, double fraction, Rng& rng) {
    Bytes out(base.begin(), base.end());
    if (out.empty() || fraction <= 0.0) return out;
    const auto target = static_cast<std::size_t>(fraction * static_cast<double>(out.size()) + 0.5);
    std::size_t changed = 0;
    while (changed < target) {
        const std::size_t run = std::min<std::size_t>(1 + rng.below(16), target - changed);
        const std::size_t pos = static_cast<std::size_t>(rng.below(out.size()));
        for (std::size_t k = 0; k < run && pos + k < out.size(); ++k)
            out[pos + k] = static_cast<std::uint8_t>(rng.below(256));
        changed += run;
    }
    return out;
}

CorpusSet write_family_corpus(const fs::path& dir, const FamilyCorpusSpec& spec) {
    if (spec.templates == 0) throw InvalidArgument("synth: need at least one template");
    Rng rng(spec.seed);

    std::vector<Bytes> templates;
    for (std::size_t t = 0; t < spec.templates; ++t) {
        const std::size_t size = uniform_size(spec.min_size, spec.max_size, rng);
        Bytes tpl;
        while (tpl.size() < size) {
            const std::size_t len = std::min<std::size_t>(size - tpl.size(), 512 + rng.below(1537));
            const Bytes block = rng.below(2) == 0 ? random_bytes(len, rng) : repetitive(len, rng);
            tpl.insert(tpl.end(), block.begin(), block.end());
        }
        templates.push_back(std::move(tpl));
    }

    std::vector<Sample> samples;
    for (std::size_t i = 0; i < spec.per_family; ++i) {
        const Bytes& tpl = templates[i % templates.size()];
        const double fraction =
            spec.min_mutation + (spec.max_mutation - spec.min_mutation) * rng.uniform();
        write_file(dir / "malware" / file_name('a', i), mutate(tpl, fraction, rng));
    }
    for (std::size_t i = 0; i < spec.per_family; ++i) {
        const std::size_t size = uniform_size(spec.min_size, spec.max_size, rng);
        Bytes content;
        while (content.size() < size) {
            const std::size_t len = std::min<std::size_t>(size - content.size(), 512 + rng.below(1537));
            const Bytes block = rng.below(2) == 0 ? random_bytes(len, rng) : text_like(len, rng);
            content.insert(content.end(), block.begin(), block.end());
        }
        write_file(dir / "benign" / file_name('b', i), content);
    }

    std::string manifest = "path,label,sha256\n";
    for (std::size_t i = 0; i < spec.per_family; ++i) manifest += "malware/" + file_name('a', i) + ",malware,\n";
    for (std::size_t i = 0; i < spec.per_family; ++i) manifest += "benign/" + file_name('b', i) + ",benign,\n";
    write_text(dir / "manifest.csv", manifest);
    return ingest_manifest(dir / "manifest.csv").corpus;
}

CorpusSet write_ratio_corpus(const fs::path& dir, const RatioCorpusSpec& spec) {
    Rng rng(spec.seed);
    std::string manifest = "path,label,sha256\n";
    for (std::size_t i = 0; i < spec.per_class; ++i) {
        const std::size_t stub = uniform_size(spec.stub_min, spec.stub_max, rng);
        Bytes packed = private_words(stub, 32 + rng.below(225), rng);
        const Bytes payload = random_bytes(uniform_size(spec.payload_min, spec.payload_max, rng), rng);
        packed.insert(packed.end(), payload.begin(), payload.end());
        write_file(dir / "malware" / file_name('p', i), packed);
        manifest += "malware/" + file_name('p', i) + ",malware,\n";
    }
    for (std::size_t i = 0; i < spec.per_class; ++i) {
        const std::size_t size = uniform_size(spec.plain_min, spec.plain_max, rng);
        write_file(dir / "benign" / file_name('t', i), private_words(size, 32 + rng.below(225), rng));
        manifest += "benign/" + file_name('t', i) + ",benign,\n";
    }
    write_text(dir / "manifest.csv", manifest);
    return ingest_manifest(dir / "manifest.csv").corpus;
}

}  // namespace ncdforest::synth
