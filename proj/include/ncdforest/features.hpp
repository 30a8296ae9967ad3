#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ncdforest/compressor.hpp"
#include "ncdforest/corpus.hpp"

namespace ncdforest {

/// The n reference samples whose NCDs form feature indices 1..n.
/// Feature index i+1 always maps to references()[i].
class ReferenceSet {
public:
    ReferenceSet() = default;
    ReferenceSet(std::vector<Sample> references, std::uint64_t seed);

    const std::vector<Sample>& references() const { return references_; }
    std::size_t size() const { return references_.size(); }
    std::uint64_t seed() const { return seed_; }
    /// SHA-256 over the ordered reference digests and ids.
    const std::string& fingerprint() const { return fingerprint_; }

private:
    std::vector<Sample> references_;
    std::uint64_t seed_ = 0;
    std::string fingerprint_;
};

/// Draws n/2 Negative and n/2 Positive references from split.reference
/// without replacement and shuffles them into feature order.
ReferenceSet select_references(const ExperimentSplit& split, const CorpusSet& corpus,
                               std::size_t n, std::uint64_t seed);

struct FeatureVector {
    std::string sample_id;
    std::vector<double> values;  // [ratio, ncd(ref_1), ..., ncd(ref_n)], each in [0, 1]
    std::string reference_fingerprint;
};

/// Which feature indices the classifier may split on. One feature layout,
/// three arms.
enum class FeatureMask { Combined, NcdOnly, RatioOnly };

std::string_view mask_name(FeatureMask mask);
FeatureMask parse_mask(std::string_view text);
/// Active indices for a vector of n+1 features.
std::vector<std::size_t> active_features(FeatureMask mask, std::size_t n_references);

/// Computes feature vectors against a fixed reference set. Reference bytes
/// are loaded once.
class FeatureExtractor {
public:
    FeatureExtractor(const ReferenceSet& refs, Compressor& compressor);

    FeatureVector extract(const Sample& sample) const;
    FeatureVector extract(const std::string& sample_id, ByteView content) const;

    /// One vector per sample, in input order.
    std::vector<FeatureVector> extract_all(const std::vector<Sample>& samples,
                                           unsigned threads = 0) const;

private:
    const ReferenceSet& refs_;
    Compressor& compressor_;
    std::vector<Bytes> reference_bytes_;
    std::vector<std::uint64_t> reference_z_;
};

FeatureVector feature_vector(const Sample& sample, const ReferenceSet& refs,
                             Compressor& compressor);

/// CSV `sample_id,label,f0,...,fn` plus `<csv>.refs.json` holding the
/// reference ids and fingerprint.
void write_feature_csv(const std::vector<FeatureVector>& vectors, const CorpusSet& corpus,
                       const ReferenceSet& refs, const std::filesystem::path& csv);

}  // namespace ncdforest
