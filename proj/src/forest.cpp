#include "ncdforest/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "ncdforest/bytes.hpp"
#include "ncdforest/error.hpp"
#include "ncdforest/parallel.hpp"
#include "ncdforest/rng.hpp"

namespace ncdforest {

double entropy(const LabelCounts& counts) {
    const auto total = static_cast<double>(counts.total());
    if (total == 0.0) return 0.0;
    double h = 0.0;
    for (const std::uint64_t c : {counts.negative, counts.positive}) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / total;
        h -= p * std::log2(p);
    }
    return h;
}

double information_gain(const LabelCounts& parent, const LabelCounts& left, const LabelCounts& right) {
    if (left.negative + right.negative != parent.negative || left.positive + right.positive != parent.positive)
        throw InvalidArgument("information_gain: left and right do not partition the parent");
    const auto total = static_cast<double>(parent.total());
    if (total == 0.0) return 0.0;
    return entropy(parent) - static_cast<double>(left.total()) / total * entropy(left) -
           static_cast<double>(right.total()) / total * entropy(right);
}

void ForestParams::validate() const {
    if (n_trees == 0) throw InvalidArgument("n_trees must be positive");
    if (features_per_branch == 0) throw InvalidArgument("features_per_branch must be positive");
    if (!(min_gain_bits > 0.0)) throw InvalidArgument("min_gain_bits must be positive");
    if (max_depth == 0) throw InvalidArgument("max_depth must be positive");
}

LabelCounts TrainingSet::counts() const {
    LabelCounts c;
    for (const Label l : labels) (l == Label::Positive ? c.positive : c.negative)++;
    return c;
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> values) const {
    if (nodes_.empty()) throw InvalidArgument("empty decision tree");
    const TreeNode* node = &nodes_.front();
    while (!node->is_leaf()) {
        const auto f = static_cast<std::size_t>(node->feature);
        node = &nodes_[values[f] <= node->threshold ? node->left : node->right];
    }
    return *node;
}

double DecisionTree::probability(std::span<const double> values) const {
    const TreeNode& leaf = leaf_for(values);
    return static_cast<double>(leaf.counts.positive) / static_cast<double>(leaf.counts.total());
}

std::size_t DecisionTree::depth() const {
    if (nodes_.empty()) return 0;
    std::size_t deepest = 0;
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        const auto [idx, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        const TreeNode& n = nodes_[idx];
        if (!n.is_leaf()) {
            stack.emplace_back(n.left, d + 1);
            stack.emplace_back(n.right, d + 1);
        }
    }
    return deepest;
}

bool DecisionTree::uses_feature(std::size_t feature) const {
    return std::any_of(nodes_.begin(), nodes_.end(), [feature](const TreeNode& n) {
        return !n.is_leaf() && static_cast<std::size_t>(n.feature) == feature;
    });
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const TrainingSet& train, const ForestParams& params, std::uint64_t seed)
        : train_(train),
          params_(params),
          rng_(seed),
          pool_(train.threshold_pool.empty() ? train.rows : train.threshold_pool) {
        const std::size_t dim = train.dimension();
        if (train.active_features.empty()) {
            for (std::size_t f = 0; f < dim; ++f) features_.push_back(f);
        } else {
            features_ = train.active_features;
        }
        for (const std::size_t f : features_)
            if (f >= dim) throw InvalidArgument("active feature index out of range");
        if (features_.empty()) throw InvalidArgument("training vectors have no features");
    }

    std::vector<TreeNode> build() {
        std::vector<std::size_t> all(train_.rows.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        grow(all, 0);
        return std::move(nodes_);
    }

private:
    LabelCounts count(const std::vector<std::size_t>& idx) const {
        LabelCounts c;
        for (const std::size_t i : idx) (train_.labels[i] == Label::Positive ? c.positive : c.negative)++;
        return c;
    }

    std::uint32_t grow(const std::vector<std::size_t>& idx, std::size_t depth) {
        const auto self = static_cast<std::uint32_t>(nodes_.size());
        TreeNode node;
        node.counts = count(idx);
        nodes_.push_back(node);
        if (node.counts.negative == 0 || node.counts.positive == 0 || depth >= params_.max_depth)
            return self;

        double best_gain = -std::numeric_limits<double>::infinity();
        std::size_t best_feature = 0;
        double best_threshold = 0.0;
        LabelCounts best_left;
        for (std::size_t c = 0; c < params_.features_per_branch; ++c) {
            const std::size_t f = features_[rng_.below(features_.size())];
            const double threshold = pool_[rng_.below(pool_.size())][f];
            LabelCounts left;
            for (const std::size_t i : idx)
                if (train_.rows[i][f] <= threshold)
                    (train_.labels[i] == Label::Positive ? left.positive : left.negative)++;
            const LabelCounts right{node.counts.negative - left.negative, node.counts.positive - left.positive};
            const double gain = information_gain(node.counts, left, right);
            if (gain > best_gain) {
                best_gain = gain;
                best_feature = f;
                best_threshold = threshold;
                best_left = left;
            }
        }
        if (best_gain < params_.min_gain_bits || best_left.total() == 0 ||
            best_left.total() == node.counts.total())
            return self;

        std::vector<std::size_t> left_idx;
        std::vector<std::size_t> right_idx;
        for (const std::size_t i : idx)
            (train_.rows[i][best_feature] <= best_threshold ? left_idx : right_idx).push_back(i);
        const std::uint32_t left = grow(left_idx, depth + 1);
        const std::uint32_t right = grow(right_idx, depth + 1);
        nodes_[self].feature = static_cast<int>(best_feature);
        nodes_[self].threshold = best_threshold;
        nodes_[self].left = left;
        nodes_[self].right = right;
        return self;
    }

    const TrainingSet& train_;
    const ForestParams& params_;
    Rng rng_;
    const std::vector<std::vector<double>>& pool_;
    std::vector<std::size_t> features_;
    std::vector<TreeNode> nodes_;
};

void check_training_set(const TrainingSet& train) {
    if (train.rows.empty()) throw InvalidArgument("training set is empty");
    if (train.rows.size() != train.labels.size())
        throw InvalidArgument("training set has mismatched rows and labels");
    const std::size_t dim = train.dimension();
    for (const auto& row : train.rows)
        if (row.size() != dim) throw InvalidArgument("training vectors differ in dimension");
    for (const auto& row : train.threshold_pool)
        if (row.size() != dim) throw InvalidArgument("threshold pool vectors differ in dimension");
}

}  // namespace

DecisionTree train_tree(const TrainingSet& train, const ForestParams& params, std::uint64_t tree_seed) {
    params.validate();
    check_training_set(train);
    return DecisionTree(TreeBuilder(train, params, tree_seed).build());
}

Forest::Forest(std::vector<DecisionTree> trees, ForestParams params, std::size_t dimension,
               LabelCounts training_counts, std::string reference_fingerprint)
    : trees_(std::move(trees)),
      params_(params),
      dimension_(dimension),
      training_counts_(training_counts),
      reference_fingerprint_(std::move(reference_fingerprint)) {}

Forest train_forest(const TrainingSet& train, const ForestParams& params,
                    const std::string& reference_fingerprint, unsigned threads) {
    params.validate();
    check_training_set(train);
    std::vector<DecisionTree> trees(params.n_trees);
    parallel_for(trees.size(), threads, [&](std::size_t i) {
        trees[i] = DecisionTree(TreeBuilder(train, params, derive_seed(params.seed, i)).build());
    });
    return Forest(std::move(trees), params, train.dimension(), train.counts(), reference_fingerprint);
}

double classify(const Forest& forest, std::span<const double> values) {
    if (values.size() != forest.dimension())
        throw InvalidArgument("classify: vector has " + std::to_string(values.size()) +
                              " features, forest expects " + std::to_string(forest.dimension()));
    if (forest.trees().empty()) throw InvalidArgument("classify: forest has no trees");
    std::vector<double> votes;
    votes.reserve(forest.trees().size());
    for (const DecisionTree& tree : forest.trees()) votes.push_back(tree.probability(values));
    // Summing in sorted order makes the score independent of tree order.
    std::sort(votes.begin(), votes.end());
    double sum = 0.0;
    for (const double v : votes) sum += v;
    return sum / static_cast<double>(votes.size());
}

std::vector<double> feature_importance(const Forest& forest) {
    std::vector<double> importance(forest.dimension(), 0.0);
    if (forest.trees().empty()) return importance;
    std::vector<std::size_t> used(forest.dimension(), 0);
    for (const DecisionTree& tree : forest.trees()) {
        std::vector<bool> seen(forest.dimension(), false);
        for (const TreeNode& n : tree.nodes())
            if (!n.is_leaf()) seen[static_cast<std::size_t>(n.feature)] = true;
        for (std::size_t f = 0; f < seen.size(); ++f) used[f] += seen[f] ? 1 : 0;
    }
    for (std::size_t f = 0; f < used.size(); ++f)
        importance[f] = static_cast<double>(used[f]) / static_cast<double>(forest.trees().size());
    return importance;
}

namespace {

using json = nlohmann::ordered_json;
constexpr const char* kModelFormat = "ncdforest-model";
constexpr int kModelVersion = 1;

json node_to_json(const std::vector<TreeNode>& nodes, std::uint32_t idx) {
    const TreeNode& n = nodes[idx];
    if (n.is_leaf()) return {{"neg", n.counts.negative}, {"pos", n.counts.positive}};
    return {{"feature", n.feature},
            {"threshold", n.threshold},
            {"left", node_to_json(nodes, n.left)},
            {"right", node_to_json(nodes, n.right)}};
}

LabelCounts node_from_json(const json& j, std::vector<TreeNode>& nodes, std::size_t dimension) {
    const auto self = static_cast<std::uint32_t>(nodes.size());
    nodes.emplace_back();
    if (j.contains("neg")) {
        nodes[self].counts = {j.at("neg").get<std::uint64_t>(), j.at("pos").get<std::uint64_t>()};
        if (nodes[self].counts.total() == 0) throw Error("model: empty leaf");
        return nodes[self].counts;
    }
    const int feature = j.at("feature").get<int>();
    if (feature < 0 || static_cast<std::size_t>(feature) >= dimension)
        throw Error("model: feature index out of range");
    nodes[self].feature = feature;
    nodes[self].threshold = j.at("threshold").get<double>();
    nodes[self].left = static_cast<std::uint32_t>(nodes.size());
    const LabelCounts l = node_from_json(j.at("left"), nodes, dimension);
    nodes[self].right = static_cast<std::uint32_t>(nodes.size());
    const LabelCounts r = node_from_json(j.at("right"), nodes, dimension);
    nodes[self].counts = {l.negative + r.negative, l.positive + r.positive};
    return nodes[self].counts;
}

}  // namespace

std::string forest_to_json(const Forest& forest) {
    const ForestParams& p = forest.params();
    json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["params"] = {{"n_trees", p.n_trees},
                   {"features_per_branch", p.features_per_branch},
                   {"min_gain_bits", p.min_gain_bits},
                   {"max_depth", p.max_depth},
                   {"seed", p.seed}};
    j["dimension"] = forest.dimension();
    j["reference_fingerprint"] = forest.reference_fingerprint();
    j["training_counts"] = {{"neg", forest.training_counts().negative},
                            {"pos", forest.training_counts().positive}};
    j["trees"] = json::array();
    for (const DecisionTree& t : forest.trees()) j["trees"].push_back(node_to_json(t.nodes(), 0));
    return j.dump(1) + "\n";
}

Forest forest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
        if (j.at("format") != kModelFormat) throw Error("model: not an ncdforest model");
        if (j.at("version").get<int>() != kModelVersion)
            throw Error("model: unsupported version " + j.at("version").dump());
        ForestParams p;
        const json& jp = j.at("params");
        p.n_trees = jp.at("n_trees").get<std::size_t>();
        p.features_per_branch = jp.at("features_per_branch").get<std::size_t>();
        p.min_gain_bits = jp.at("min_gain_bits").get<double>();
        p.max_depth = jp.at("max_depth").get<std::size_t>();
        p.seed = jp.at("seed").get<std::uint64_t>();
        const auto dimension = j.at("dimension").get<std::size_t>();
        std::vector<DecisionTree> trees;
        for (const json& jt : j.at("trees")) {
            std::vector<TreeNode> nodes;
            node_from_json(jt, nodes, dimension);
            trees.emplace_back(std::move(nodes));
        }
        if (trees.size() != p.n_trees) throw Error("model: tree count does not match params");
        const LabelCounts counts{j.at("training_counts").at("neg").get<std::uint64_t>(),
                                 j.at("training_counts").at("pos").get<std::uint64_t>()};
        return Forest(std::move(trees), p, dimension, counts,
                      j.at("reference_fingerprint").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("model: malformed JSON: ") + e.what());
    }
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
    write_text(path, forest_to_json(forest));
}

Forest load_forest(const std::filesystem::path& path) {
    const Bytes raw = read_file(path);
    return forest_from_json(std::string(raw.begin(), raw.end()));
}

}  // namespace ncdforest
