#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ncdforest/corpus.hpp"
#include "ncdforest/distance.hpp"

namespace ncdforest {

/// How pruned matrix entries are treated.
enum class PrunedEntries {
    Reject,              // throw if any entry is pruned
    UseLowerBound,       // use the stored lower bound as the distance
};

struct KMedoidsOptions {
    std::size_t k = 35;
    std::uint64_t seed = 0;
    std::size_t max_iters = 1000;
    PrunedEntries pruned = PrunedEntries::Reject;
};

struct ClusterAssignment {
    std::size_t k = 0;
    std::vector<std::size_t> medoids;      // matrix indices, one per cluster
    std::vector<std::size_t> assignment;   // cluster index per sample
    double cost = 0.0;
    std::size_t iterations = 0;
    std::vector<double> cost_history;      // initial cost, then each accepted swap
};

/// Seeded k-medoids with random in-cluster swap proposals: each pass assigns
/// every point to its nearest medoid (ties to the lowest medoid index), then
/// for each cluster proposes one random member as the new medoid and keeps it
/// iff the total cost strictly decreases. Stops after a pass without changes
/// or after max_iters passes.
ClusterAssignment kmedoids(const DistanceMatrix& matrix, const KMedoidsOptions& options);

/// Sum over samples of the distance to their assigned medoid.
double assignment_cost(const DistanceMatrix& matrix, const std::vector<std::size_t>& medoids,
                       const std::vector<std::size_t>& assignment,
                       PrunedEntries pruned = PrunedEntries::Reject);

struct ClusterLabelling {
    std::vector<Label> cluster_labels;
    double false_positive_rate = 0.0;
    double true_positive_rate = 0.0;
    double accuracy = 0.0;
};

/// Majority label per cluster (ties -> Negative). `labels` is indexed like
/// the matrix.
ClusterLabelling label_clusters(const ClusterAssignment& assignment,
                                const std::vector<Label>& labels);

/// Labels for the matrix ids looked up in `corpus`; throws for missing ids.
std::vector<Label> labels_for(const DistanceMatrix& matrix, const CorpusSet& corpus);

void write_assignment_csv(const ClusterAssignment& assignment, const DistanceMatrix& matrix,
                          const std::filesystem::path& path);
std::string cluster_metrics_json(const ClusterAssignment& assignment,
                                 const ClusterLabelling& labelling);

}  // namespace ncdforest
