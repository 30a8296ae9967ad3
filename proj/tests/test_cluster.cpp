#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>

#include "ncdforest/cluster.hpp"
#include "ncdforest/error.hpp"
#include "ncdforest/rng.hpp"
#include "support.hpp"

using namespace ncdforest;
using testing::TempDir;

namespace {

DistanceMatrix blank(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(100 + i));
    return DistanceMatrix(ids, "test", std::nullopt);
}

// Blocks of the given sizes: within-block distances in [0.05, 0.3),
// cross-block distances in (0.9, 1.0], diagonal 0.01.
DistanceMatrix blocks(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
    std::vector<std::size_t> block;
    for (std::size_t b = 0; b < sizes.size(); ++b) block.insert(block.end(), sizes[b], b);
    DistanceMatrix m = blank(block.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < block.size(); ++i)
        for (std::size_t j = i; j < block.size(); ++j) {
            double v = 0.01;
            if (i != j) v = block[i] == block[j] ? 0.05 + 0.25 * rng.uniform() : 0.9 + 0.1 * rng.uniform();
            m.at(i, j) = {EntryStatus::Exact, v};
        }
    return m;
}

DistanceMatrix random_matrix(std::size_t n, std::uint64_t seed) {
    DistanceMatrix m = blank(n);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) m.at(i, j) = {EntryStatus::Exact, i == j ? 0.0 : rng.uniform()};
    return m;
}

double recomputed_cost(const DistanceMatrix& m, const ClusterAssignment& a) {
    double c = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) c += m.at(i, a.medoids[a.assignment[i]]).value;
    return c;
}

}  // namespace

TEST_SUITE("cluster") {

TEST_CASE("k equal to n makes every point its own medoid") {
    const DistanceMatrix m = blocks({3, 4}, 1);
    KMedoidsOptions opt;
    opt.k = 7;
    const ClusterAssignment a = kmedoids(m, opt);
    CHECK(std::set<std::size_t>(a.medoids.begin(), a.medoids.end()).size() == 7);
    for (std::size_t c = 0; c < 7; ++c) CHECK(a.assignment[a.medoids[c]] == c);
    CHECK(a.cost == doctest::Approx(7 * 0.01));
}

TEST_CASE("well separated blocks are recovered") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const DistanceMatrix m = blocks({6, 9}, seed);
        KMedoidsOptions opt;
        opt.k = 2;
        opt.seed = seed;
        const ClusterAssignment a = kmedoids(m, opt);
        CAPTURE(seed);
        for (std::size_t i = 1; i < 6; ++i) CHECK(a.assignment[i] == a.assignment[0]);
        for (std::size_t i = 7; i < 15; ++i) CHECK(a.assignment[i] == a.assignment[6]);
        CHECK(a.assignment[0] != a.assignment[6]);
    }
}

TEST_CASE("assignment is the brute-force argmin and the cost is consistent") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const DistanceMatrix m = random_matrix(12, seed);
        KMedoidsOptions opt;
        opt.k = 1 + seed % 5;
        opt.seed = seed;
        const ClusterAssignment a = kmedoids(m, opt);
        REQUIRE(a.medoids.size() == opt.k);
        REQUIRE(a.assignment.size() == 12);
        CHECK(a.k == opt.k);
        for (std::size_t i = 0; i < 12; ++i) {
            // Each medoid sits in its own cluster; other points take the
            // nearest medoid, lowest index on ties.
            const auto self = std::find(a.medoids.begin(), a.medoids.end(), i);
            if (self != a.medoids.end()) {
                CHECK(a.assignment[i] == static_cast<std::size_t>(self - a.medoids.begin()));
                continue;
            }
            std::size_t best = 0;
            for (std::size_t c = 1; c < a.medoids.size(); ++c)
                if (m.at(i, a.medoids[c]).value < m.at(i, a.medoids[best]).value) best = c;
            CHECK(a.assignment[i] == best);
        }
        CHECK(a.cost == doctest::Approx(recomputed_cost(m, a)).epsilon(1e-12));
        CHECK(a.cost == assignment_cost(m, a.medoids, a.assignment));
        REQUIRE_FALSE(a.cost_history.empty());
        CHECK(a.cost_history.back() == a.cost);
        for (std::size_t h = 1; h < a.cost_history.size(); ++h) CHECK(a.cost_history[h] < a.cost_history[h - 1]);
        CHECK(a.iterations >= 1);
        CHECK(a.iterations <= opt.max_iters);
    }
}

TEST_CASE("ties go to the lowest medoid index") {
    DistanceMatrix m = blank(3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i; j < 3; ++j) m.at(i, j) = {EntryStatus::Exact, i == j ? 0.0 : 0.5};
    KMedoidsOptions opt;
    opt.k = 2;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        opt.seed = seed;
        const ClusterAssignment a = kmedoids(m, opt);
        const auto non_medoid = static_cast<std::size_t>(3 - a.medoids[0] - a.medoids[1]);
        CHECK(a.assignment[non_medoid] == 0);
    }
}

TEST_CASE("determinism and max_iters") {
    const DistanceMatrix m = random_matrix(30, 4);
    KMedoidsOptions opt;
    opt.k = 4;
    opt.seed = 17;
    const ClusterAssignment a = kmedoids(m, opt);
    const ClusterAssignment b = kmedoids(m, opt);
    CHECK(a.medoids == b.medoids);
    CHECK(a.assignment == b.assignment);
    CHECK(a.cost_history == b.cost_history);
    opt.max_iters = 1;
    CHECK(kmedoids(m, opt).iterations == 1);
}

TEST_CASE("invalid k") {
    const DistanceMatrix m = random_matrix(5, 1);
    KMedoidsOptions opt;
    opt.k = 0;
    CHECK_THROWS_AS(kmedoids(m, opt), InvalidArgument);
    opt.k = 6;
    CHECK_THROWS_AS(kmedoids(m, opt), InvalidArgument);
}

TEST_CASE("pruned entries are rejected or replaced by their bound") {
    DistanceMatrix m = blocks({4, 4}, 3);
    m = DistanceMatrix(m.ids(), "test", 0.8);
    const DistanceMatrix full = blocks({4, 4}, 3);
    m.entries() = full.entries();
    m.at(0, 5) = {EntryStatus::Pruned, 0.85};
    KMedoidsOptions opt;
    opt.k = 2;
    CHECK_THROWS_AS(kmedoids(m, opt), Error);
    opt.pruned = PrunedEntries::UseLowerBound;
    const ClusterAssignment a = kmedoids(m, opt);
    CHECK(a.assignment[0] == a.assignment[3]);
    CHECK(a.assignment[4] == a.assignment[7]);
    CHECK(a.assignment[0] != a.assignment[4]);

    DistanceMatrix pending = full;
    pending.at(1, 2) = {};
    CHECK_THROWS_AS(kmedoids(pending, opt), Error);
}

TEST_CASE("majority labelling") {
    ClusterAssignment a;
    a.k = 2;
    a.medoids = {0, 4};
    a.assignment = {0, 0, 0, 0, 1, 1};
    SUBCASE("pure clusters") {
        const auto l = label_clusters(a, {Label::Positive, Label::Positive, Label::Positive, Label::Positive,
                                          Label::Negative, Label::Negative});
        CHECK(l.accuracy == 1.0);
        CHECK(l.false_positive_rate == 0.0);
        CHECK(l.true_positive_rate == 1.0);
    }
    SUBCASE("a negative in a positive cluster is a false positive") {
        const auto l = label_clusters(a, {Label::Positive, Label::Positive, Label::Positive, Label::Negative,
                                          Label::Negative, Label::Negative});
        CHECK(l.cluster_labels == std::vector<Label>{Label::Positive, Label::Negative});
        CHECK(l.false_positive_rate == doctest::Approx(1.0 / 3.0));
        CHECK(l.true_positive_rate == 1.0);
        CHECK(l.accuracy == doctest::Approx(5.0 / 6.0));
    }
    SUBCASE("ties label the cluster negative") {
        const auto l = label_clusters(a, {Label::Positive, Label::Positive, Label::Negative, Label::Negative,
                                          Label::Positive, Label::Negative});
        CHECK(l.cluster_labels == std::vector<Label>{Label::Negative, Label::Negative});
        CHECK(l.true_positive_rate == 0.0);
        CHECK(l.false_positive_rate == 0.0);
        CHECK(l.accuracy == 0.5);
    }
    SUBCASE("label count must match") {
        CHECK_THROWS_AS(label_clusters(a, {Label::Positive}), InvalidArgument);
    }
}

TEST_CASE("assignment csv and metrics json") {
    const DistanceMatrix m = blocks({3, 3}, 2);
    KMedoidsOptions opt;
    opt.k = 2;
    const ClusterAssignment a = kmedoids(m, opt);
    TempDir dir;
    write_assignment_csv(a, m, dir / "a.csv");
    std::ifstream in(dir / "a.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "sample_id,cluster_index,is_medoid");
    std::size_t rows = 0, medoids = 0;
    while (std::getline(in, line)) {
        const std::string expect = m.ids()[rows] + "," + std::to_string(a.assignment[rows]) + ",";
        CHECK(line.rfind(expect, 0) == 0);
        medoids += line.ends_with(",true");
        ++rows;
    }
    CHECK(rows == 6);
    CHECK(medoids == 2);

    const auto labelling = label_clusters(a, std::vector<Label>(6, Label::Positive));
    const auto j = nlohmann::json::parse(cluster_metrics_json(a, labelling));
    CHECK(j["k"] == 2);
    CHECK(j["accuracy"] == 1.0);
}

}
