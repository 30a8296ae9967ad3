#include "ncdforest/features.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"
#include "ncdforest/distance.hpp"
#include "ncdforest/error.hpp"
#include "ncdforest/parallel.hpp"
#include "ncdforest/rng.hpp"

namespace ncdforest {

ReferenceSet::ReferenceSet(std::vector<Sample> references, std::uint64_t seed)
    : references_(std::move(references)), seed_(seed) {
    std::string material;
    for (const Sample& s : references_) material += s.id + "\t" + s.digest + "\n";
    fingerprint_ = sha256_hex(material);
}

ReferenceSet select_references(const ExperimentSplit& split, const CorpusSet& corpus,
                               std::size_t n, std::uint64_t seed) {
    if (n % 2 != 0) throw InvalidArgument("select_references: n must be even, got " + std::to_string(n));
    std::vector<Sample> pool[2];
    for (const auto& id : split.reference) {
        const Sample& s = corpus.at(id);
        pool[s.label == Label::Positive ? 1 : 0].push_back(s);
    }
    const std::size_t half = n / 2;
    if (pool[0].size() < half || pool[1].size() < half) {
        throw InvalidArgument("select_references: need " + std::to_string(half) +
                              " references per label, pool has " + std::to_string(pool[0].size()) +
                              " benign and " + std::to_string(pool[1].size()) + " malware");
    }

    Rng rng(seed);
    std::vector<Sample> chosen;
    for (auto& candidates : pool) {
        for (std::size_t i = 0; i < half; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
            std::swap(candidates[i], candidates[j]);
            chosen.push_back(candidates[i]);
        }
    }
    rng.shuffle(std::span<Sample>(chosen));
    return ReferenceSet(std::move(chosen), seed);
}

std::string_view mask_name(FeatureMask mask) {
    switch (mask) {
        case FeatureMask::Combined: return "combined";
        case FeatureMask::NcdOnly: return "ncd";
        case FeatureMask::RatioOnly: return "ratio";
    }
    return "unknown";
}

FeatureMask parse_mask(std::string_view text) {
    if (text == "combined") return FeatureMask::Combined;
    if (text == "ncd") return FeatureMask::NcdOnly;
    if (text == "ratio") return FeatureMask::RatioOnly;
    throw InvalidArgument("unknown feature mask '" + std::string(text) + "' (expected combined, ncd or ratio)");
}

std::vector<std::size_t> active_features(FeatureMask mask, std::size_t n_references) {
    std::vector<std::size_t> out;
    if (mask != FeatureMask::NcdOnly) out.push_back(0);
    if (mask != FeatureMask::RatioOnly)
        for (std::size_t i = 1; i <= n_references; ++i) out.push_back(i);
    if (out.empty()) throw InvalidArgument("feature mask '" + std::string(mask_name(mask)) +
                                           "' selects no features without references");
    return out;
}

FeatureExtractor::FeatureExtractor(const ReferenceSet& refs, Compressor& compressor)
    : refs_(refs), compressor_(compressor) {
    for (const Sample& r : refs_.references()) {
        reference_bytes_.push_back(read_file(r.path));
        reference_z_.push_back(compressor_.compressed_size(r));
    }
}

FeatureVector FeatureExtractor::extract(const Sample& sample) const {
    const Bytes content = read_file(sample.path);
    if (content.size() != sample.size_bytes)
        throw Error("sample '" + sample.id + "' changed size since ingest");
    return extract(sample.id, content);
}

FeatureVector FeatureExtractor::extract(const std::string& sample_id, ByteView content) const {
    const auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
    FeatureVector fv;
    fv.sample_id = sample_id;
    fv.reference_fingerprint = refs_.fingerprint();
    fv.values.reserve(refs_.size() + 1);
    fv.values.push_back(clamp01(compressibility_ratio(content, compressor_)));

    const std::uint64_t z = compressor_.compressed_size(content);
    const std::uint64_t limit = compressor_.config().max_input_bytes();
    for (std::size_t i = 0; i < refs_.size(); ++i) {
        const Sample& ref = refs_.references()[i];
        const Bytes& rb = reference_bytes_[i];
        if (content.size() + rb.size() > limit)
            throw Error("pair (" + sample_id + ", " + ref.id + "): concatenation exceeds the limit of " +
                        compressor_.fingerprint() + "; raise dictionary_bytes");
        // Same canonical order as ncd(Sample, Sample): smaller id first.
        const Bytes joined = sample_id <= ref.id ? concat(content, rb) : concat(rb, content);
        fv.values.push_back(clamp01(ncd_from_sizes(z, reference_z_[i], compressor_.compressed_size(joined))));
    }
    return fv;
}

std::vector<FeatureVector> FeatureExtractor::extract_all(const std::vector<Sample>& samples,
                                                         unsigned threads) const {
    std::vector<FeatureVector> out(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) { out[i] = extract(samples[i]); });
    return out;
}

FeatureVector feature_vector(const Sample& sample, const ReferenceSet& refs, Compressor& compressor) {
    return FeatureExtractor(refs, compressor).extract(sample);
}

void write_feature_csv(const std::vector<FeatureVector>& vectors, const CorpusSet& corpus,
                       const ReferenceSet& refs, const std::filesystem::path& csv_path) {
    std::ostringstream out;
    out.precision(17);
    out << "sample_id,label";
    for (std::size_t i = 0; i <= refs.size(); ++i) out << ",f" << i;
    out << '\n';
    for (const FeatureVector& fv : vectors) {
        if (fv.reference_fingerprint != refs.fingerprint())
            throw InvalidArgument("feature vector for '" + fv.sample_id + "' built against other references");
        out << csv::escape(fv.sample_id) << ',' << label_name(corpus.at(fv.sample_id).label);
        for (const double v : fv.values) out << ',' << v;
        out << '\n';
    }
    write_text(csv_path, out.str());

    nlohmann::ordered_json sidecar;
    sidecar["reference_fingerprint"] = refs.fingerprint();
    sidecar["seed"] = refs.seed();
    sidecar["references"] = nlohmann::json::array();
    for (const Sample& r : refs.references())
        sidecar["references"].push_back({{"id", r.id}, {"label", label_name(r.label)}, {"sha256", r.digest}});
    write_text(csv_path.string() + ".refs.json", sidecar.dump(2) + "\n");
}

}  // namespace ncdforest
