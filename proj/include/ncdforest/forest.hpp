#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ncdforest/corpus.hpp"

namespace ncdforest {

struct LabelCounts {
    std::uint64_t negative = 0;
    std::uint64_t positive = 0;

    std::uint64_t total() const { return negative + positive; }
    friend bool operator==(const LabelCounts&, const LabelCounts&) = default;
};

/// Shannon entropy of the label distribution in bits; 0 for empty sets.
double entropy(const LabelCounts& counts);

/// H(B) - |L|/|B| H(L) - |R|/|B| H(R). Throws InvalidArgument unless
/// L + R == B component-wise.
double information_gain(const LabelCounts& parent, const LabelCounts& left,
                        const LabelCounts& right);

struct ForestParams {
    std::size_t n_trees = 400;
    std::size_t features_per_branch = 30;
    double min_gain_bits = 0.001;
    std::size_t max_depth = 5;  // branch levels; the root is depth 0
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

/// Row-major feature matrix with labels.
struct TrainingSet {
    std::vector<std::vector<double>> rows;
    std::vector<Label> labels;
    /// Candidate thresholds for feature f are drawn uniformly from
    /// threshold_pool[*][f]; empty means "use rows".
    std::vector<std::vector<double>> threshold_pool;
    /// Feature indices eligible for splits; empty means all.
    std::vector<std::size_t> active_features;

    std::size_t dimension() const { return rows.empty() ? 0 : rows.front().size(); }
    LabelCounts counts() const;
};

/// Flat node array; node 0 is the root. Internal nodes send
/// value <= threshold left and value > threshold right.
struct TreeNode {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    LabelCounts counts;  // training samples that reached this node

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class DecisionTree {
public:
    DecisionTree() = default;
    explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    const TreeNode& leaf_for(std::span<const double> values) const;
    /// count_positive / (count_positive + count_negative) of the reached leaf.
    double probability(std::span<const double> values) const;
    std::size_t depth() const;
    bool uses_feature(std::size_t feature) const;

    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

private:
    std::vector<TreeNode> nodes_;
};

/// Greedy tree: each node draws features_per_branch (feature, threshold)
/// candidates and keeps the one with the largest gain (first drawn wins ties).
/// A node becomes a leaf when pure, at max_depth, or when the best gain is
/// below min_gain_bits.
DecisionTree train_tree(const TrainingSet& train, const ForestParams& params,
                        std::uint64_t tree_seed);

class Forest {
public:
    Forest() = default;
    Forest(std::vector<DecisionTree> trees, ForestParams params, std::size_t dimension,
           LabelCounts training_counts, std::string reference_fingerprint);

    const std::vector<DecisionTree>& trees() const { return trees_; }
    const ForestParams& params() const { return params_; }
    std::size_t dimension() const { return dimension_; }
    const LabelCounts& training_counts() const { return training_counts_; }
    const std::string& reference_fingerprint() const { return reference_fingerprint_; }

    friend bool operator==(const Forest&, const Forest&) = default;

private:
    std::vector<DecisionTree> trees_;
    ForestParams params_;
    std::size_t dimension_ = 0;
    LabelCounts training_counts_;
    std::string reference_fingerprint_;
};

/// Tree i uses seed derive_seed(params.seed, i); the result does not depend
/// on `threads`.
Forest train_forest(const TrainingSet& train, const ForestParams& params,
                    const std::string& reference_fingerprint = {}, unsigned threads = 0);

/// Mean leaf probability over all trees. Throws InvalidArgument on a
/// dimension mismatch.
double classify(const Forest& forest, std::span<const double> values);

/// Fraction of trees that split on each feature at least once.
std::vector<double> feature_importance(const Forest& forest);

/// Versioned JSON: {"format": "ncdforest-model", "version": 1, "params", ...,
/// "trees": [nested {feature, threshold, left, right} / {neg, pos}]}.
std::string forest_to_json(const Forest& forest);
Forest forest_from_json(const std::string& text);
void save_forest(const Forest& forest, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

}  // namespace ncdforest
