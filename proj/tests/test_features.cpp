#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>

#include "ncdforest/distance.hpp"
#include "ncdforest/error.hpp"
#include "ncdforest/features.hpp"
#include "ncdforest/synth.hpp"
#include "support.hpp"

using namespace ncdforest;
using testing::Blob;
using testing::TempDir;
using testing::seeded_random;

namespace {

// per_label text-like negatives and mutated-template positives, 4-8 KiB.
CorpusSet small_corpus(const TempDir& dir, std::size_t per_label, std::uint64_t seed = 3) {
    Rng rng(seed);
    const Bytes base = synth::mixed_content(6000, rng);
    std::vector<Blob> blobs;
    for (std::size_t i = 0; i < per_label; ++i) {
        blobs.push_back({"p" + std::to_string(i), Label::Positive, synth::mutate(base, 0.1, rng)});
        blobs.push_back({"n" + std::to_string(i), Label::Negative,
                         synth::text_like(4096 + rng.below(4096), rng)});
    }
    return testing::corpus_from(dir, blobs);
}

ExperimentSplit pool_of(const CorpusSet& corpus) {
    ExperimentSplit split;
    for (const Sample& s : corpus.samples()) split.reference.push_back(s.id);
    return split;
}

std::vector<std::string> ids_of(const ReferenceSet& refs) {
    std::vector<std::string> out;
    for (const Sample& s : refs.references()) out.push_back(s.id);
    return out;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("n equal to the pool takes the whole pool, shuffled") {
    // Metadata-only corpus: selection never reads file contents.
    std::vector<Sample> samples;
    for (int i = 0; i < 100; ++i) {
        samples.push_back({"m" + std::to_string(1000 + i), "/nonexistent", Label::Positive, 1, ""});
        samples.push_back({"b" + std::to_string(1000 + i), "/nonexistent", Label::Negative, 1, ""});
    }
    const CorpusSet corpus(samples, "memory");
    const ExperimentSplit split = pool_of(corpus);
    const ReferenceSet refs = select_references(split, corpus, 200, 5);
    CHECK(refs.size() == 200);
    const std::vector<std::string> ids = ids_of(refs);
    CHECK(std::set<std::string>(ids.begin(), ids.end()) ==
          std::set<std::string>(split.reference.begin(), split.reference.end()));
    CHECK(ids != split.reference);  // not left in pool order

    std::size_t positives = 0;
    for (const Sample& s : refs.references()) positives += s.label == Label::Positive;
    CHECK(positives == 100);

    SUBCASE("same seed, same order; other seed, other order") {
        CHECK(ids_of(select_references(split, corpus, 200, 5)) == ids);
        CHECK(select_references(split, corpus, 200, 5).fingerprint() == refs.fingerprint());
        CHECK(ids_of(select_references(split, corpus, 200, 6)) != ids);
    }
    SUBCASE("n = 0 gives an empty set") {
        const ReferenceSet none = select_references(split, corpus, 0, 5);
        CHECK(none.size() == 0);
        CHECK_FALSE(none.fingerprint().empty());
    }
    SUBCASE("odd n or a small pool is an error") {
        CHECK_THROWS_AS(select_references(split, corpus, 3, 5), InvalidArgument);
        CHECK_THROWS_AS(select_references(split, corpus, 202, 5), InvalidArgument);
    }
    SUBCASE("only split.reference is drawn from") {
        ExperimentSplit narrow;
        for (int i = 0; i < 10; ++i) {
            narrow.reference.push_back("m" + std::to_string(1000 + i));
            narrow.reference.push_back("b" + std::to_string(1000 + i));
        }
        const ReferenceSet r = select_references(narrow, corpus, 20, 1);
        const auto got = ids_of(r);
        CHECK(std::set<std::string>(got.begin(), got.end()) ==
              std::set<std::string>(narrow.reference.begin(), narrow.reference.end()));
    }
}

TEST_CASE("a sample identical to a reference is at distance near zero from it") {
    TempDir dir;
    const CorpusSet corpus = small_corpus(dir, 6);
    Compressor c{CompressorConfig{}};
    const ReferenceSet refs = select_references(pool_of(corpus), corpus, 8, 2);
    for (std::size_t j = 0; j < refs.size(); ++j) {
        const FeatureVector fv = feature_vector(refs.references()[j], refs, c);
        CAPTURE(j);
        CHECK(fv.values[j + 1] < 0.05);
    }
}

TEST_CASE("a random sample is far from every reference and incompressible") {
    TempDir dir;
    const CorpusSet corpus = small_corpus(dir, 6);
    Compressor c{CompressorConfig{}};
    const ReferenceSet refs = select_references(pool_of(corpus), corpus, 12, 2);
    const FeatureExtractor fx(refs, c);
    const FeatureVector fv = fx.extract("zz-random", seeded_random(20000, 99));
    REQUIRE(fv.values.size() == 13);
    CHECK(fv.values[0] == doctest::Approx(1.0).epsilon(0.01));
    for (std::size_t i = 1; i < fv.values.size(); ++i) CHECK(fv.values[i] > 0.9);
}

TEST_CASE("vector layout, range and clamping") {
    TempDir dir;
    const CorpusSet corpus = small_corpus(dir, 8);
    Compressor c{CompressorConfig{}};
    const ReferenceSet refs = select_references(pool_of(corpus), corpus, 6, 4);
    const FeatureExtractor fx(refs, c);
    const std::vector<FeatureVector> all = fx.extract_all(corpus.samples(), 3);
    REQUIRE(all.size() == corpus.size());
    for (std::size_t k = 0; k < all.size(); ++k) {
        const FeatureVector& fv = all[k];
        const Sample& s = corpus.samples()[k];
        CHECK(fv.sample_id == s.id);
        CHECK(fv.reference_fingerprint == refs.fingerprint());
        REQUIRE(fv.values.size() == refs.size() + 1);
        for (double v : fv.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        const double ratio = compressibility_ratio(s, c);
        CHECK(fv.values[0] == std::clamp(ratio, 0.0, 1.0));
        for (std::size_t i = 0; i < refs.size(); ++i) {
            const double raw = ncd(s, refs.references()[i], c);
            if (raw >= 0.0 && raw <= 1.0) {
                CHECK(fv.values[i + 1] == raw);
            } else {
                CHECK(std::abs(fv.values[i + 1] - raw) <= 0.02);
            }
        }
        // Index stability: a second extraction is index-aligned and identical.
        CHECK(fx.extract(s).values == fv.values);
    }

    SUBCASE("no references leaves only the ratio") {
        const ReferenceSet none = select_references(pool_of(corpus), corpus, 0, 1);
        const FeatureVector fv = feature_vector(corpus.samples()[0], none, c);
        CHECK(fv.values.size() == 1);
    }
    SUBCASE("random content clamps the ratio to one") {
        const FeatureVector fv = fx.extract("zz", seeded_random(64, 1));
        CHECK(compressibility_ratio(seeded_random(64, 1), c) > 1.0);
        CHECK(fv.values[0] == 1.0);
    }
}

TEST_CASE("feature masks") {
    CHECK(active_features(FeatureMask::Combined, 3) == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(active_features(FeatureMask::NcdOnly, 3) == std::vector<std::size_t>{1, 2, 3});
    CHECK(active_features(FeatureMask::RatioOnly, 3) == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(active_features(FeatureMask::NcdOnly, 0), InvalidArgument);
    for (FeatureMask m : {FeatureMask::Combined, FeatureMask::NcdOnly, FeatureMask::RatioOnly})
        CHECK(parse_mask(mask_name(m)) == m);
    CHECK_THROWS_AS(parse_mask("all"), InvalidArgument);
}

TEST_CASE("feature csv and reference sidecar") {
    TempDir dir;
    const CorpusSet corpus = small_corpus(dir, 4);
    Compressor c{CompressorConfig{}};
    const ReferenceSet refs = select_references(pool_of(corpus), corpus, 4, 9);
    const auto vectors = FeatureExtractor(refs, c).extract_all(corpus.samples());
    write_feature_csv(vectors, corpus, refs, dir / "f.csv");

    std::ifstream in(dir / "f.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "sample_id,label,f0,f1,f2,f3,f4");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const Sample& s = corpus.samples()[rows];
        CHECK(line.rfind(s.id + "," + std::string(label_name(s.label)) + ",", 0) == 0);
        CHECK(std::count(line.begin(), line.end(), ',') == 6);
        ++rows;
    }
    CHECK(rows == corpus.size());

    std::ifstream side(dir / "f.csv.refs.json");
    const auto j = nlohmann::json::parse(side);
    CHECK(j["reference_fingerprint"] == refs.fingerprint());
    CHECK(j["seed"] == 9);
    REQUIRE(j["references"].size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(j["references"][i]["id"] == refs.references()[i].id);

    SUBCASE("vectors from another reference set are refused") {
        const ReferenceSet other = select_references(pool_of(corpus), corpus, 4, 10);
        CHECK_THROWS_AS(write_feature_csv(vectors, corpus, other, dir / "g.csv"), InvalidArgument);
    }
}

}
