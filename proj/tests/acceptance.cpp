// Acceptance checks, one PASS/FAIL line per criterion.
// Usage: ncdforest_acceptance [criterion...]   (all when none given)

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "ncdforest/cluster.hpp"
#include "ncdforest/distance.hpp"
#include "ncdforest/eval.hpp"
#include "ncdforest/forest.hpp"
#include "ncdforest/synth.hpp"
#include "support.hpp"

using namespace ncdforest;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string read_text(const fs::path& p) {
    const Bytes b = read_file(p);
    return std::string(b.begin(), b.end());
}

int cli(const std::vector<std::string>& args, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str();
    if (code != 0) std::cerr << e.str();
    return code;
}

// Shared fixtures, built on first use.
class Workspace {
public:
    // 50 files of 8-64 KiB: repetitive, random and mutated templates.
    const CorpusSet& mixed() {
        if (!mixed_) {
            Rng rng(2024);
            std::vector<Bytes> templates;
            for (int t = 0; t < 3; ++t) templates.push_back(synth::mixed_content(16384 + rng.below(16384), rng));
            std::vector<testing::Blob> blobs;
            for (int i = 0; i < 50; ++i) {
                const std::size_t size = 8192 + rng.below(57345);
                Bytes content;
                switch (i % 3) {
                    case 0: content = synth::repetitive(size, rng); break;
                    case 1: content = synth::random_bytes(size, rng); break;
                    default: content = synth::mutate(templates[rng.below(3)], 0.05 + 0.1 * rng.uniform(), rng);
                }
                blobs.push_back({"f" + std::to_string(100 + i), i % 2 ? Label::Positive : Label::Negative,
                                 std::move(content)});
            }
            mixed_ = testing::corpus_from(dir_ / "mixed", blobs);
        }
        return *mixed_;
    }

    fs::path family() {
        const fs::path d = dir_ / "family";
        if (!fs::exists(d / "manifest.csv")) {
            synth::FamilyCorpusSpec spec;
            spec.per_family = 220;
            synth::write_family_corpus(d, spec);
        }
        return d / "manifest.csv";
    }

    fs::path ratio() {
        const fs::path d = dir_ / "ratio";
        if (!fs::exists(d / "manifest.csv")) synth::write_ratio_corpus(d, synth::RatioCorpusSpec{});
        return d / "manifest.csv";
    }

    // Criterion 6's experiment; `tag` picks the output directory.
    fs::path experiment(const std::string& tag, double* seconds = nullptr) {
        const fs::path out = dir_ / ("experiment-" + tag);
        if (fs::exists(out / "summary.json")) return out;
        const std::string manifest = family().string();
        Stopwatch clock;
        const int code = cli({"experiment", "--corpus", manifest, "--out", out.string(), "--n-ref", "40",
                              "--n-train", "200", "--n-test", "200", "--runs", "5", "--seed", "1", "--trees",
                              "100", "--arms", "combined", "ncd"});
        if (seconds) *seconds = clock.seconds();
        if (code != 0) throw std::runtime_error("experiment exited with " + std::to_string(code));
        return out;
    }

    Compressor& compressor() { return compressor_; }
    const fs::path& dir() const { return dir_.path(); }

private:
    testing::TempDir dir_;
    Compressor compressor_{CompressorConfig{}};
    std::optional<CorpusSet> mixed_;
};

void c1(Workspace& ws, Outcome& o) {
    Stopwatch clock;
    const CorpusSet& corpus = ws.mixed();
    Compressor fresh{CompressorConfig{}};
    double worst = 0.0;
    std::map<std::string, double> by_kind;
    std::size_t over = 0;
    for (const Sample& s : corpus.samples()) {
        const double d = ncd(s, s, fresh);
        const int i = std::stoi(s.id.substr(s.id.rfind('f') + 1)) - 100;
        double& k = by_kind[i % 3 == 0 ? "repetitive" : i % 3 == 1 ? "random" : "mutated"];
        k = std::max(k, d);
        worst = std::max(worst, d);
        over += d >= 0.05;
    }
    const double t = clock.seconds();
    o.detail << "max NCD(x,x) " << worst << ", " << over << " of " << corpus.size() << " files >= 0.05, max by kind:";
    for (const auto& [kind, d] : by_kind) o.detail << ' ' << kind << ' ' << d;
    o.detail << ", " << t << " s";
    o.require(corpus.size() == 50, "50 files");
    o.require(worst < 0.05, "NCD(x,x) < 0.05");
    o.require(t < 120.0, "runtime < 2 min");
}

void c2(Workspace& ws, Outcome& o) {
    const CorpusSet& corpus = ws.mixed();
    const DistanceMatrix m = pairwise_matrix(corpus, ws.compressor());
    // Bound recomputed from sizes here rather than trusted from the audit.
    std::size_t violations = 0, pairs = 0;
    double worst = -1.0;
    const auto& s = corpus.samples();
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = i; j < s.size(); ++j) {
            const auto zi = ws.compressor().compressed_size(s[i]), zj = ws.compressor().compressed_size(s[j]);
            const double lb = 1.0 - double(std::min(zi, zj)) / double(std::max(zi, zj));
            const double d = m.at(i, j).value;
            worst = std::max(worst, lb - d);
            violations += lb > d + 0.02;
            ++pairs;
        }
    const auto audited = audit_lower_bound(m, corpus, ws.compressor(), 0.02);
    o.detail << pairs << " pairs, " << violations << " violations, max(bound - ncd) " << worst;
    o.require(violations == 0, "no violations");
    o.require(audited.empty(), "audit agrees");
}

void c3(Workspace&, Outcome& o) {
    const double v = ncd_lower_bound(10, 3);
    o.detail << std::setprecision(17) << "ncd_lower_bound(10, 3) = " << v;
    o.require(v == 0.7, "exactly 0.7");
    o.require(ncd_lower_bound(3, 10) == 0.7, "symmetric");
}

void c4(Workspace& ws, Outcome& o) {
    const CorpusSet& corpus = ws.mixed();
    const DistanceMatrix full = pairwise_matrix(corpus, ws.compressor());
    MatrixOptions opt;
    opt.prune_threshold = 0.9;
    const DistanceMatrix pruned = pairwise_matrix(corpus, ws.compressor(), opt);
    std::size_t mismatched = 0;
    for (std::size_t k = 0; k < pruned.pair_count(); ++k) {
        const MatrixEntry& e = pruned.entries()[k];
        if (e.status == EntryStatus::Exact) mismatched += e.value != full.entries()[k].value;
        if (e.status == EntryStatus::Pending) ++mismatched;
    }
    const std::vector<double> thresholds{0.8, 0.85, 0.9, 0.95, 0.99, 1.0};
    const auto curve = savings_curve(corpus, ws.compressor(), thresholds);
    bool monotone = true;
    for (std::size_t i = 1; i < curve.size(); ++i)
        monotone = monotone && curve[i].fraction_skipped <= curve[i - 1].fraction_skipped;
    o.detail << pruned.count(EntryStatus::Pruned) << " of " << pruned.pair_count() << " pruned at 0.9, "
             << mismatched << " mismatches; savings";
    for (const auto& p : curve) o.detail << ' ' << p.fraction_skipped;
    o.require(mismatched == 0, "pruned matrix agrees with unpruned");
    o.require(curve.size() == thresholds.size(), "one point per threshold");
    o.require(monotone, "savings non-increasing");
    o.require(curve.back().fraction_skipped == 0.0, "fraction(1.0) = 0");
    o.require(std::size_t(std::llround(curve[2].fraction_skipped * double(curve[2].total))) ==
                  pruned.count(EntryStatus::Pruned),
              "savings(0.9) matches the pruned count");
}

double direct_entropy(double n, double p) {
    double h = 0.0;
    for (double c : {n, p})
        if (c > 0) h -= c / (n + p) * std::log2(c / (n + p));
    return h;
}

void c5(Workspace&, Outcome& o) {
    double worst_h = 0.0;
    for (std::uint64_t n = 0; n <= 50; ++n)
        for (std::uint64_t p = 0; p <= 50; ++p)
            worst_h = std::max(worst_h, std::abs(entropy({n, p}) - direct_entropy(double(n), double(p))));
    double worst_g = 0.0, min_gain = 0.0;
    std::size_t partitions = 0;
    for (std::uint64_t bn = 0; bn <= 8; ++bn)
        for (std::uint64_t bp = 0; bp <= 8; ++bp)
            for (std::uint64_t ln = 0; ln <= bn; ++ln)
                for (std::uint64_t lp = 0; lp <= bp; ++lp) {
                    const LabelCounts b{bn, bp}, l{ln, lp}, r{bn - ln, bp - lp};
                    const double g = information_gain(b, l, r);
                    const double total = double(bn + bp);
                    const double oracle =
                        total == 0 ? 0.0
                                   : direct_entropy(double(bn), double(bp)) -
                                         double(l.total()) / total * direct_entropy(double(ln), double(lp)) -
                                         double(r.total()) / total *
                                             direct_entropy(double(r.negative), double(r.positive));
                    worst_g = std::max(worst_g, std::abs(g - oracle));
                    min_gain = std::min(min_gain, g);
                    ++partitions;
                }
    o.detail << "entropy max error " << worst_h << "; " << partitions << " partitions, gain max error " << worst_g
             << ", min gain " << min_gain;
    o.require(worst_h <= 1e-12, "entropy within 1e-12");
    o.require(worst_g <= 1e-12, "gain equals oracle");
    o.require(min_gain >= -1e-12, "gain >= 0");
}

json summary_of(const fs::path& out) { return json::parse(read_text(out / "summary.json")); }

void c6(Workspace& ws, Outcome& o) {
    double seconds = 0.0;
    const fs::path out = ws.experiment("a", &seconds);
    const json arm = summary_of(out)["arms"]["combined"];
    const double acc = arm["accuracy"]["mean"], fp = arm["fp_rate"]["mean"];
    o.detail << "combined mean accuracy " << acc << ", mean FP " << fp << ", " << seconds << " s for both arms";
    o.require(acc >= 0.95, "accuracy >= 0.95");
    o.require(fp <= 0.05, "FP <= 0.05");
    o.require(seconds < 900.0, "runtime < 15 min");
}

void c7(Workspace& ws, Outcome& o) {
    const json summary = summary_of(ws.experiment("a"));
    const double combined = summary["arms"]["combined"]["accuracy"]["mean"];
    const double ncd_only = summary["arms"]["ncd"]["accuracy"]["mean"];
    const double p = summary["mann_whitney"].at(0)["p_value"];
    // Every tie-free 6+6 input reduces to one of the C(12,6) rank patterns.
    double worst = 0.0;
    std::size_t patterns = 0;
    for (std::uint32_t mask = 0; mask < (1u << 12); ++mask) {
        if (std::popcount(mask) != 6) continue;
        std::vector<double> a, b;
        for (int r = 0; r < 12; ++r) (mask >> r & 1u ? a : b).push_back(r + 1);
        worst = std::max(worst, std::abs(mann_whitney_exact_p(a, b) - mann_whitney_normal_p(a, b)));
        ++patterns;
    }
    o.detail << "combined " << combined << " " << summary["arms"]["combined"]["accuracies"].dump() << " >= ncd "
             << ncd_only << " " << summary["arms"]["ncd"]["accuracies"].dump() << " >= 0.90; p " << p
             << "; max |exact - normal| " << worst << " over " << patterns << " rank patterns";
    o.require(combined >= ncd_only, "combined >= ncd-only");
    o.require(ncd_only >= 0.90, "ncd-only >= 0.90");
    o.require(p >= 0.0 && p <= 1.0, "p in [0, 1]");
    o.require(worst <= 0.01, "exact and normal p within 0.01");
}

void c8(Workspace& ws, Outcome& o) {
    const fs::path manifest = ws.family();
    const CorpusSet corpus = ingest_manifest(manifest).corpus;
    Stopwatch clock;
    const DistanceMatrix m = pairwise_matrix(corpus, ws.compressor());
    KMedoidsOptions opt;
    opt.k = 10;
    opt.seed = 1;
    const ClusterAssignment a = kmedoids(m, opt);
    const ClusterLabelling l = label_clusters(a, labels_for(m, corpus));
    bool non_increasing = true;
    for (std::size_t i = 1; i < a.cost_history.size(); ++i)
        non_increasing = non_increasing && a.cost_history[i] <= a.cost_history[i - 1];
    o.detail << m.size() << " samples, accuracy " << l.accuracy << ", FP " << l.false_positive_rate << ", cost "
             << a.cost_history.front() << " -> " << a.cost << " in " << a.iterations << " passes, " << clock.seconds()
             << " s";
    o.require(l.accuracy >= 0.90, "accuracy >= 0.90");
    o.require(non_increasing, "cost non-increasing");
}

void c9(Workspace& ws, Outcome& o) {
    const fs::path a = ws.experiment("a"), b = ws.experiment("b");
    std::size_t compared = 0, differing = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (!name.starts_with("model_") && !name.starts_with("run_") && name != "aggregate.csv") continue;
        const fs::path rel = fs::relative(e.path(), a);
        ++compared;
        if (!fs::exists(b / rel) || read_text(e.path()) != read_text(b / rel)) {
            ++differing;
            o.detail << " differs: " << rel.generic_string();
        }
    }
    o.detail << compared << " model/run/aggregate files compared, " << differing << " differ";
    o.require(compared == 2 * (5 + 5 + 1), "all files present");
    o.require(differing == 0, "byte-identical");
}

void c10(Workspace& ws, Outcome& o) {
    const fs::path out = ws.dir() / "importance";
    if (cli({"experiment", "--corpus", ws.ratio().string(), "--out", out.string(), "--n-ref", "40", "--n-train",
             "100", "--n-test", "60", "--runs", "5", "--seed", "1", "--trees", "100"}) != 0)
        throw std::runtime_error("ratio experiment failed");
    std::vector<std::string> args{"importance"};
    for (int r = 0; r < 5; ++r)
        args.insert(args.end(), {"--model", (out / "combined" / ("model_00" + std::to_string(r) + ".json")).string()});
    std::string csv;
    if (cli(args, &csv) != 0) throw std::runtime_error("importance failed");
    // Rows are model,feature,importance; averaged over the five models.
    std::vector<double> importance;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const std::size_t last = line.rfind(','), mid = line.rfind(',', last - 1);
        const std::size_t feature = std::stoul(line.substr(mid + 1, last - mid - 1));
        if (importance.size() <= feature) importance.resize(feature + 1);
        importance[feature] += std::stod(line.substr(last + 1)) / 5.0;
    }
    const std::size_t rank =
        1 + std::count_if(importance.begin(), importance.end(), [&](double v) { return v > importance.at(0); });
    o.detail << importance.size() << " features, importance[0] " << importance.at(0) << ", rank " << rank;
    o.require(importance.size() == 41, "n + 1 features");
    o.require(rank <= 3, "ratio in the top 3");
}

void c11(Workspace&, Outcome& o) {
    std::vector<Sample> samples;
    json report = json::array();
    for (int i = 0; i < 1000; ++i) {
        const std::string pd = sha256_hex("positive " + std::to_string(i));
        const std::string nd = sha256_hex("negative " + std::to_string(i));
        samples.push_back({"malware/" + std::to_string(i), "", Label::Positive, 1, pd});
        samples.push_back({"benign/" + std::to_string(i), "", Label::Negative, 1, nd});
        if (i < 994)
            report.push_back({{"sha256", pd}, {"engine", "Engine-1"}, {"verdict", i < 883 ? "detected" : "clean"}});
        report.push_back({{"sha256", nd}, {"engine", "Engine-1"}, {"verdict", i < 19 ? "detected" : "clean"}});
    }
    const ScanComparison c = compare_scan_report(parse_scan_report(report.dump()), CorpusSet(samples, "fixture"));
    const EngineSummary& e = c.engines.at(0);
    o.detail << e.engine << ": " << e.detected_positives << "/" << e.scanned_positives << " -> TP " << e.tp_rate
             << ", " << e.detected_negatives << "/" << e.scanned_negatives << " -> FP " << e.fp_rate << ", unscanned "
             << c.unscanned;
    o.require(e.scanned_positives == 994 && e.detected_positives == 883, "positive counts");
    o.require(std::abs(e.tp_rate - 0.888) <= 0.0005, "TP 0.888 +- 0.0005");
    o.require(e.fp_rate == 0.019, "FP 0.019");
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<int, std::function<void(Workspace&, Outcome&)>> criteria{
        {1, c1}, {2, c2}, {3, c3}, {4, c4}, {5, c5}, {6, c6}, {7, c7}, {8, c8}, {9, c9}, {10, c10}, {11, c11}};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
    if (selected.empty())
        for (const auto& [n, _] : criteria) selected.insert(n);

    Workspace ws;
    int failures = 0;
    for (int n : selected) {
        Outcome o;
        try {
            criteria.at(n)(ws, o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " error: " << e.what();
        }
        failures += !o.pass;
        std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail.str() << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
