#include "ncdforest/cluster.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"
#include "ncdforest/bytes.hpp"
#include "ncdforest/error.hpp"
#include "ncdforest/rng.hpp"

namespace ncdforest {
namespace {

// Dense copy of the matrix with pruned entries resolved per policy.
std::vector<double> dense(const DistanceMatrix& matrix, PrunedEntries pruned) {
    const std::size_t n = matrix.size();
    std::vector<double> d(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const MatrixEntry& e = matrix.at(i, j);
            if (e.status == EntryStatus::Pending)
                throw InvalidArgument("kmedoids: matrix entry (" + matrix.ids()[i] + ", " +
                                      matrix.ids()[j] + ") was never computed");
            if (e.status == EntryStatus::Pruned && pruned == PrunedEntries::Reject)
                throw InvalidArgument("kmedoids: matrix has pruned entries; use the lower-bound mode");
            d[i * n + j] = d[j * n + i] = e.value;
        }
    return d;
}

struct Evaluation {
    std::vector<std::size_t> assignment;
    double cost = 0.0;
};

// Nearest medoid per point, ties to the lowest medoid index; medoids stay in
// their own cluster.
Evaluation evaluate(const std::vector<double>& d, std::size_t n, const std::vector<std::size_t>& medoids) {
    Evaluation ev;
    ev.assignment.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < medoids.size(); ++c) {
            if (medoids[c] == p) {
                best = c;
                break;
            }
            const double dist = d[p * n + medoids[c]];
            if (dist < best_d || (dist == best_d && medoids[c] < medoids[best])) {
                best_d = dist;
                best = c;
            }
        }
        ev.assignment[p] = best;
        ev.cost += d[p * n + medoids[best]];
    }
    return ev;
}

}  // namespace

double assignment_cost(const DistanceMatrix& matrix, const std::vector<std::size_t>& medoids,
                       const std::vector<std::size_t>& assignment, PrunedEntries pruned) {
    const std::size_t n = matrix.size();
    if (assignment.size() != n) throw InvalidArgument("assignment_cost: assignment size mismatch");
    const std::vector<double> d = dense(matrix, pruned);
    double cost = 0.0;
    for (std::size_t p = 0; p < n; ++p) cost += d[p * n + medoids.at(assignment[p])];
    return cost;
}

ClusterAssignment kmedoids(const DistanceMatrix& matrix, const KMedoidsOptions& options) {
    const std::size_t n = matrix.size();
    if (options.k == 0) throw InvalidArgument("kmedoids: k must be positive");
    if (options.k > n)
        throw InvalidArgument("kmedoids: k = " + std::to_string(options.k) + " exceeds " +
                              std::to_string(n) + " samples");
    const std::vector<double> d = dense(matrix, options.pruned);

    Rng rng(options.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<std::size_t> medoids;
    for (std::size_t c = 0; c < options.k; ++c) {
        const auto j = c + static_cast<std::size_t>(rng.below(n - c));
        std::swap(order[c], order[j]);
        medoids.push_back(order[c]);
    }
    std::sort(medoids.begin(), medoids.end());

    Evaluation current = evaluate(d, n, medoids);
    ClusterAssignment out;
    out.k = options.k;
    out.cost_history.push_back(current.cost);

    std::size_t passes = 0;
    while (passes < options.max_iters) {
        ++passes;
        bool changed = false;
        for (std::size_t c = 0; c < options.k; ++c) {
            std::vector<std::size_t> members;
            for (std::size_t p = 0; p < n; ++p)
                if (current.assignment[p] == c && p != medoids[c]) members.push_back(p);
            if (members.empty()) continue;
            std::vector<std::size_t> trial = medoids;
            trial[c] = members[rng.below(members.size())];
            Evaluation candidate = evaluate(d, n, trial);
            if (candidate.cost < current.cost) {
                medoids = std::move(trial);
                current = std::move(candidate);
                out.cost_history.push_back(current.cost);
                changed = true;
            }
        }
        if (!changed) break;
    }

    out.medoids = std::move(medoids);
    out.assignment = std::move(current.assignment);
    out.cost = current.cost;
    out.iterations = passes;
    return out;
}

ClusterLabelling label_clusters(const ClusterAssignment& assignment, const std::vector<Label>& labels) {
    if (labels.size() != assignment.assignment.size())
        throw InvalidArgument("label_clusters: " + std::to_string(assignment.assignment.size()) +
                              " samples but " + std::to_string(labels.size()) + " labels");
    std::vector<std::uint64_t> pos(assignment.k, 0);
    std::vector<std::uint64_t> neg(assignment.k, 0);
    for (std::size_t p = 0; p < labels.size(); ++p)
        (labels[p] == Label::Positive ? pos : neg)[assignment.assignment[p]]++;

    ClusterLabelling out;
    std::uint64_t tp = 0, fp = 0, total_pos = 0, total_neg = 0;
    for (std::size_t c = 0; c < assignment.k; ++c) {
        const Label l = pos[c] > neg[c] ? Label::Positive : Label::Negative;
        out.cluster_labels.push_back(l);
        total_pos += pos[c];
        total_neg += neg[c];
        if (l == Label::Positive) {
            tp += pos[c];
            fp += neg[c];
        }
    }
    const std::uint64_t correct = tp + (total_neg - fp);
    out.true_positive_rate = total_pos == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(total_pos);
    out.false_positive_rate = total_neg == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(total_neg);
    out.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
    return out;
}

std::vector<Label> labels_for(const DistanceMatrix& matrix, const CorpusSet& corpus) {
    std::vector<Label> labels;
    for (const auto& id : matrix.ids()) {
        const Sample* s = corpus.find(id);
        if (s == nullptr) throw InvalidArgument("no label for matrix sample '" + id + "'");
        labels.push_back(s->label);
    }
    return labels;
}

void write_assignment_csv(const ClusterAssignment& assignment, const DistanceMatrix& matrix,
                          const std::filesystem::path& path) {
    std::ostringstream out;
    out << "sample_id,cluster_index,is_medoid\n";
    for (std::size_t p = 0; p < assignment.assignment.size(); ++p) {
        const std::size_t c = assignment.assignment[p];
        out << csv::escape(matrix.ids()[p]) << ',' << c << ','
            << (assignment.medoids[c] == p ? "true" : "false") << '\n';
    }
    write_text(path, out.str());
}

std::string cluster_metrics_json(const ClusterAssignment& assignment, const ClusterLabelling& labelling) {
    nlohmann::ordered_json j;
    j["k"] = assignment.k;
    j["cost"] = assignment.cost;
    j["iterations"] = assignment.iterations;
    j["accepted_swaps"] = assignment.cost_history.size() - 1;
    j["accuracy"] = labelling.accuracy;
    j["false_positive_rate"] = labelling.false_positive_rate;
    j["true_positive_rate"] = labelling.true_positive_rate;
    j["cluster_labels"] = nlohmann::json::array();
    for (const Label l : labelling.cluster_labels) j["cluster_labels"].push_back(label_name(l));
    return j.dump(2) + "\n";
}

}  // namespace ncdforest
