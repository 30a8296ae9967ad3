#include "ncdforest/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_set>

#include "csv.hpp"
#include "ncdforest/bytes.hpp"
#include "ncdforest/error.hpp"
#include "ncdforest/parallel.hpp"
#include "ncdforest/rng.hpp"

namespace fs = std::filesystem;

namespace ncdforest {

std::string_view label_name(Label label) {
    return label == Label::Positive ? "malware" : "benign";
}

Label parse_label(std::string_view text) {
    if (text == "malware") return Label::Positive;
    if (text == "benign") return Label::Negative;
    throw InvalidArgument("unknown label '" + std::string(text) + "' (expected malware or benign)");
}

CorpusSet::CorpusSet(std::vector<Sample> samples, std::string provenance)
    : samples_(std::move(samples)), provenance_(std::move(provenance)) {
    std::sort(samples_.begin(), samples_.end(),
              [](const Sample& a, const Sample& b) { return a.id < b.id; });
    const auto dup = std::adjacent_find(samples_.begin(), samples_.end(),
                                        [](const Sample& a, const Sample& b) { return a.id == b.id; });
    if (dup != samples_.end()) throw InvalidArgument("duplicate sample id '" + dup->id + "'");
}

const Sample* CorpusSet::find(std::string_view id) const {
    const auto it = std::lower_bound(samples_.begin(), samples_.end(), id,
                                     [](const Sample& s, std::string_view key) { return s.id < key; });
    return it != samples_.end() && it->id == id ? &*it : nullptr;
}

const Sample& CorpusSet::at(std::string_view id) const {
    const Sample* s = find(id);
    if (s == nullptr) throw InvalidArgument("unknown sample id '" + std::string(id) + "'");
    return *s;
}

std::size_t CorpusSet::count(Label label) const {
    return static_cast<std::size_t>(std::count_if(
        samples_.begin(), samples_.end(), [label](const Sample& s) { return s.label == label; }));
}

std::vector<Sample> CorpusSet::with_label(Label label) const {
    std::vector<Sample> out;
    std::copy_if(samples_.begin(), samples_.end(), std::back_inserter(out),
                 [label](const Sample& s) { return s.label == label; });
    return out;
}

CorpusSet merge(const CorpusSet& a, const CorpusSet& b) {
    std::vector<Sample> all = a.samples();
    all.insert(all.end(), b.samples().begin(), b.samples().end());
    std::string provenance = a.provenance();
    if (!b.provenance().empty())
        provenance += (provenance.empty() ? "" : "; ") + b.provenance();
    return CorpusSet(std::move(all), std::move(provenance));
}

namespace {

// Stats and digests `paths` in parallel; unreadable entries become skips.
IngestResult describe_files(const std::vector<std::pair<std::string, fs::path>>& files,
                            const std::vector<Label>& labels,
                            const std::vector<std::string>& expected_digests,
                            std::string provenance) {
    struct Slot {
        std::optional<Sample> sample;
        std::string reason;
    };
    std::vector<Slot> slots(files.size());
    parallel_for(files.size(), 0, [&](std::size_t i) {
        const auto& [id, path] = files[i];
        std::error_code ec;
        if (!fs::is_regular_file(path, ec)) {
            slots[i].reason = ec ? ec.message() : "missing or not a regular file";
            return;
        }
        try {
            Sample s;
            s.id = id;
            s.path = path;
            s.label = labels[i];
            s.size_bytes = fs::file_size(path);
            s.digest = sha256_file(path);
            if (!expected_digests[i].empty() && expected_digests[i] != s.digest) {
                slots[i].reason = "sha256 mismatch (manifest " + expected_digests[i] + ")";
                return;
            }
            slots[i].sample = std::move(s);
        } catch (const std::exception& e) {
            slots[i].reason = e.what();
        }
    });

    IngestResult result;
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].sample)
            samples.push_back(std::move(*slots[i].sample));
        else
            result.skipped.push_back({files[i].second, slots[i].reason});
    }
    result.corpus = CorpusSet(std::move(samples), std::move(provenance));
    return result;
}

std::string trim_cr(std::string line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    return line;
}

}  // namespace

IngestResult ingest_directory(const fs::path& dir, Label label) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw Error("source directory not found: " + dir.string());

    std::vector<fs::path> paths;
    for (auto it = fs::recursive_directory_iterator(dir, fs::directory_options::skip_permission_denied);
         it != fs::recursive_directory_iterator(); ++it) {
        if (!it->is_directory()) paths.push_back(it->path());
    }
    std::sort(paths.begin(), paths.end());

    std::vector<std::pair<std::string, fs::path>> files;
    for (const auto& p : paths) {
        const std::string rel = p.lexically_relative(dir).generic_string();
        files.emplace_back(std::string(label_name(label)) + "/" + rel, p);
    }
    return describe_files(files, std::vector<Label>(files.size(), label),
                          std::vector<std::string>(files.size()),
                          std::string(label_name(label)) + " directory " + dir.generic_string());
}

IngestResult ingest_manifest(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw Error("manifest not found: " + manifest.string());
    const fs::path base = manifest.parent_path();

    std::string line;
    if (!std::getline(in, line) || trim_cr(line) != "path,label,sha256")
        throw InvalidArgument(manifest.string() + " line 1: expected header 'path,label,sha256'");

    std::vector<std::pair<std::string, fs::path>> files;
    std::vector<Label> labels;
    std::vector<std::string> digests;
    std::vector<std::string> fields;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        line = trim_cr(line);
        if (line.empty()) continue;
        const std::string where = manifest.string() + " line " + std::to_string(row) + ": ";
        if (!csv::split_record(line, fields)) throw InvalidArgument(where + "unterminated quote");
        if (fields.size() < 2 || fields.size() > 3)
            throw InvalidArgument(where + "expected 3 fields, got " + std::to_string(fields.size()));
        if (fields[0].empty()) throw InvalidArgument(where + "empty path");
        Label label;
        try {
            label = parse_label(fields[1]);
        } catch (const InvalidArgument& e) {
            throw InvalidArgument(where + e.what());
        }
        std::string digest = fields.size() == 3 ? fields[2] : std::string();
        if (!digest.empty()) {
            std::transform(digest.begin(), digest.end(), digest.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            if (digest.size() != 64 ||
                digest.find_first_not_of("0123456789abcdef") != std::string::npos)
                throw InvalidArgument(where + "sha256 must be 64 hex digits");
        }
        const fs::path written(fields[0]);
        files.emplace_back(fields[0], written.is_absolute() ? written : base / written);
        labels.push_back(label);
        digests.push_back(std::move(digest));
    }
    return describe_files(files, labels, digests, "manifest " + manifest.generic_string());
}

IngestResult ingest(const fs::path& source, Label label) {
    std::error_code ec;
    if (fs::is_directory(source, ec)) return ingest_directory(source, label);
    if (fs::is_regular_file(source, ec)) return ingest_manifest(source);
    throw Error("source not found: " + source.string());
}

void write_manifest(const CorpusSet& corpus, const fs::path& manifest) {
    const fs::path base = fs::absolute(manifest).parent_path();
    std::ostringstream out;
    out << "path,label,sha256\n";
    for (const Sample& s : corpus.samples()) {
        fs::path rel = fs::absolute(s.path).lexically_normal().lexically_relative(base);
        if (rel.empty()) rel = fs::absolute(s.path);
        out << csv::escape(rel.generic_string()) << ',' << label_name(s.label) << ','
            << s.digest << '\n';
    }
    write_text(manifest, out.str());
}

DedupeResult dedupe(const CorpusSet& corpus) {
    for (const Sample& s : corpus.samples()) {
        std::error_code ec;
        const auto size = fs::file_size(s.path, ec);
        if (ec) throw Error("sample '" + s.id + "' vanished: " + s.path.string());
        if (size != s.size_bytes)
            throw Error("sample '" + s.id + "' changed size since ingest: " + s.path.string());
    }

    // size -> digest -> ids (samples are already in id order)
    std::map<std::pair<std::uint64_t, std::string>, std::vector<const Sample*>> groups;
    for (const Sample& s : corpus.samples()) groups[{s.size_bytes, s.digest}].push_back(&s);

    DedupeResult result;
    std::unordered_set<std::string> removed;
    for (const auto& [key, members] : groups) {
        if (members.size() < 2) continue;
        std::vector<std::pair<const Sample*, Bytes>> representatives;
        for (const Sample* s : members) {
            Bytes content = read_file(s->path);
            const auto same = std::find_if(representatives.begin(), representatives.end(),
                                           [&](const auto& rep) { return rep.second == content; });
            if (same != representatives.end()) {
                result.removed.push_back({same->first->id, s->id, "size+digest+bytes"});
                removed.insert(s->id);
            } else {
                representatives.emplace_back(s, std::move(content));
            }
        }
    }

    std::vector<Sample> kept;
    for (const Sample& s : corpus.samples())
        if (!removed.contains(s.id)) kept.push_back(s);
    std::sort(result.removed.begin(), result.removed.end(),
              [](const DuplicateRemoval& a, const DuplicateRemoval& b) {
                  return a.removed_id < b.removed_id;
              });
    result.corpus = CorpusSet(std::move(kept), corpus.provenance());
    return result;
}

void write_dedupe_report(const std::vector<DuplicateRemoval>& removed, const fs::path& path) {
    std::ostringstream out;
    out << "kept_id,removed_id,reason\n";
    for (const auto& r : removed)
        out << csv::escape(r.kept_id) << ',' << csv::escape(r.removed_id) << ',' << r.reason << '\n';
    write_text(path, out.str());
}

CorpusSet sample(const CorpusSet& corpus, std::size_t n_per_label, std::uint64_t seed,
                 bool with_replacement) {
    Rng rng(seed);
    std::vector<Sample> out;
    for (const Label label : {Label::Negative, Label::Positive}) {
        const std::vector<Sample> population = corpus.with_label(label);
        if (n_per_label == 0) continue;
        if (population.empty() || (!with_replacement && population.size() < n_per_label)) {
            throw InvalidArgument("sample: label " + std::string(label_name(label)) + " needs " +
                                  std::to_string(n_per_label) + ", has " +
                                  std::to_string(population.size()) + " (short by " +
                                  std::to_string(n_per_label - std::min(n_per_label, population.size())) +
                                  ")");
        }
        if (with_replacement) {
            std::map<std::string, std::size_t> seen;
            for (std::size_t k = 0; k < n_per_label; ++k) {
                Sample s = population[rng.below(population.size())];
                const std::size_t occurrence = ++seen[s.id];
                if (occurrence > 1) s.id += "#" + std::to_string(occurrence);
                out.push_back(std::move(s));
            }
        } else {
            std::vector<std::size_t> order(population.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            for (std::size_t i = 0; i < n_per_label; ++i) {
                const auto j = i + static_cast<std::size_t>(rng.below(order.size() - i));
                std::swap(order[i], order[j]);
                out.push_back(population[order[i]]);
            }
        }
    }
    return CorpusSet(std::move(out), corpus.provenance() + "; sample n=" +
                                         std::to_string(n_per_label) + " seed=" +
                                         std::to_string(seed) +
                                         (with_replacement ? " with replacement" : ""));
}

ExperimentSplit split(const CorpusSet& corpus, std::size_t n_ref, std::size_t n_train,
                      std::size_t n_test, std::uint64_t seed) {
    for (const auto& [name, n] : {std::pair{"n_ref", n_ref}, {"n_train", n_train}, {"n_test", n_test}}) {
        if (n % 2 != 0) throw InvalidArgument(std::string("split: ") + name + " must be even");
    }
    return split_counts(corpus,
                        {n_ref / 2, n_ref / 2, n_train / 2, n_train / 2, n_test / 2, n_test / 2},
                        seed);
}

ExperimentSplit split_counts(const CorpusSet& corpus, const SplitCounts& counts,
                             std::uint64_t seed) {
    const std::size_t need_neg =
        counts.reference_negative + counts.training_negative + counts.test_negative;
    const std::size_t need_pos =
        counts.reference_positive + counts.training_positive + counts.test_positive;
    const std::size_t have_neg = corpus.count(Label::Negative);
    const std::size_t have_pos = corpus.count(Label::Positive);
    if (need_neg > have_neg || need_pos > have_pos) {
        std::ostringstream msg;
        msg << "split: insufficient population: benign needs " << need_neg << " (ref "
            << counts.reference_negative << " + train " << counts.training_negative << " + test "
            << counts.test_negative << "), has " << have_neg << "; malware needs " << need_pos
            << " (ref " << counts.reference_positive << " + train " << counts.training_positive
            << " + test " << counts.test_positive << "), has " << have_pos;
        throw InvalidArgument(msg.str());
    }

    Rng rng(seed);
    ExperimentSplit out;
    const auto draw = [&](Label label, std::size_t n_ref, std::size_t n_train, std::size_t n_test) {
        std::vector<Sample> population = corpus.with_label(label);
        rng.shuffle(std::span<Sample>(population));
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n_ref; ++i) out.reference.push_back(population[pos++].id);
        for (std::size_t i = 0; i < n_train; ++i) out.training.push_back(population[pos++].id);
        for (std::size_t i = 0; i < n_test; ++i) out.test.push_back(population[pos++].id);
    };
    draw(Label::Negative, counts.reference_negative, counts.training_negative, counts.test_negative);
    draw(Label::Positive, counts.reference_positive, counts.training_positive, counts.test_positive);
    std::sort(out.reference.begin(), out.reference.end());
    std::sort(out.training.begin(), out.training.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

}  // namespace ncdforest
