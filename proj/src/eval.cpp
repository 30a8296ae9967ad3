#include "ncdforest/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ncdforest/bytes.hpp"
#include "ncdforest/error.hpp"
#include "ncdforest/rng.hpp"

namespace ncdforest {

using json = nlohmann::ordered_json;

RocCurve roc(const std::vector<double>& scores, const std::vector<Label>& labels) {
    if (scores.size() != labels.size()) throw InvalidArgument("roc: scores and labels differ in length");
    RocCurve curve;
    for (const Label l : labels) (l == Label::Positive ? curve.positives : curve.negatives)++;
    if (curve.positives == 0 || curve.negatives == 0)
        throw InvalidArgument("roc: need at least one sample of each label");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    const auto total = static_cast<double>(curve.positives + curve.negatives);
    const auto push = [&](double threshold, std::uint64_t tp, std::uint64_t fp) {
        RocPoint p;
        p.threshold = threshold;
        p.true_positives = tp;
        p.false_positives = fp;
        p.tp_rate = static_cast<double>(tp) / static_cast<double>(curve.positives);
        p.fp_rate = static_cast<double>(fp) / static_cast<double>(curve.negatives);
        p.accuracy = static_cast<double>(tp + (curve.negatives - fp)) / total;
        curve.points.push_back(p);
    };

    push(std::nextafter(scores[order.front()], std::numeric_limits<double>::infinity()), 0, 0);
    std::uint64_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < order.size();) {
        const double t = scores[order[k]];
        while (k < order.size() && scores[order[k]] == t) {
            (labels[order[k]] == Label::Positive ? tp : fp)++;
            ++k;
        }
        push(t, tp, fp);
    }
    push(std::nextafter(scores[order.back()], -std::numeric_limits<double>::infinity()), tp, fp);
    return curve;
}

RocPoint best_operating_point(const RocCurve& curve) {
    if (curve.points.empty()) throw InvalidArgument("best_operating_point: empty curve");
    const auto correct = [&](const RocPoint& p) { return p.true_positives + (curve.negatives - p.false_positives); };
    const RocPoint* best = &curve.points.front();
    for (const RocPoint& p : curve.points) {
        const auto c = correct(p), cb = correct(*best);
        if (c > cb || (c == cb && (p.false_positives < best->false_positives ||
                                   (p.false_positives == best->false_positives && p.threshold < best->threshold))))
            best = &p;
    }
    return *best;
}

SplitCounts ExperimentConfig::split_counts() const {
    SplitCounts c;
    c.reference_negative = c.reference_positive = n_ref / 2;
    c.training_negative = static_cast<std::size_t>(std::llround(training_negative_fraction * static_cast<double>(n_train)));
    c.training_positive = n_train - c.training_negative;
    c.test_negative = c.test_positive = n_test / 2;
    return c;
}

void ExperimentConfig::validate() const {
    if (n_ref % 2 != 0 || n_test % 2 != 0) throw InvalidArgument("n_ref and n_test must be even");
    if (n_train == 0) throw InvalidArgument("n_train must be positive");
    if (n_test == 0) throw InvalidArgument("n_test must be positive");
    if (!(training_negative_fraction >= 0.0 && training_negative_fraction <= 1.0))
        throw InvalidArgument("training bias must lie in [0, 1]");
    if (reference_count() % 2 != 0) throw InvalidArgument("reference count n must be even");
    if (reference_count() > n_ref) throw InvalidArgument("reference count n exceeds the reference pool");
    if (runs == 0) throw InvalidArgument("runs must be positive");
    if (n_train % 2 != 0 && training_negative_fraction == 0.5)
        throw InvalidArgument("balanced training needs an even n_train");
    forest.validate();
}

std::vector<std::vector<RunResult>> run_experiment_arms(const CorpusSet& corpus,
                                                        const ExperimentConfig& config,
                                                        const std::vector<FeatureMask>& masks,
                                                        Compressor& compressor) {
    config.validate();
    if (masks.empty()) throw InvalidArgument("run_experiment: no feature masks");
    const SplitCounts counts = config.split_counts();
    // Fails fast on an undersized corpus before any compression.
    split_counts(corpus, counts, 0);

    std::vector<std::vector<RunResult>> results(masks.size());
    for (std::size_t r = 0; r < config.runs; ++r) {
        RunResult base;
        base.run = r;
        base.run_seed = derive_seed(config.seed, r);
        base.split_seed = derive_seed(base.run_seed, 1);
        base.reference_seed = derive_seed(base.run_seed, 2);
        base.forest_seed = derive_seed(base.run_seed, 3);
        base.split = split_counts(corpus, counts, base.split_seed);

        const ReferenceSet refs =
            select_references(base.split, corpus, config.reference_count(), base.reference_seed);
        for (const Sample& ref : refs.references()) base.reference_ids.push_back(ref.id);

        const FeatureExtractor extractor(refs, compressor);
        std::vector<Sample> train_samples, test_samples;
        for (const auto& id : base.split.training) train_samples.push_back(corpus.at(id));
        for (const auto& id : base.split.test) test_samples.push_back(corpus.at(id));
        const std::vector<FeatureVector> train_vectors = extractor.extract_all(train_samples, config.threads);
        const std::vector<FeatureVector> test_vectors = extractor.extract_all(test_samples, config.threads);

        TrainingSet train;
        for (std::size_t i = 0; i < train_samples.size(); ++i) {
            train.rows.push_back(train_vectors[i].values);
            train.labels.push_back(train_samples[i].label);
        }
        if (config.thresholds_from_test)
            for (const auto& fv : test_vectors) train.threshold_pool.push_back(fv.values);
        std::vector<Label> test_labels;
        for (const Sample& s : test_samples) test_labels.push_back(s.label);
        base.test_ids = base.split.test;

        for (std::size_t m = 0; m < masks.size(); ++m) {
            RunResult result = base;
            train.active_features = active_features(masks[m], refs.size());
            ForestParams params = config.forest;
            params.seed = base.forest_seed;
            result.forest = train_forest(train, params, refs.fingerprint(), config.threads);
            for (const auto& fv : test_vectors) result.test_scores.push_back(classify(result.forest, fv.values));
            result.roc = roc(result.test_scores, test_labels);
            result.best = best_operating_point(result.roc);
            results[m].push_back(std::move(result));
        }
    }
    return results;
}

std::vector<RunResult> run_experiment(const CorpusSet& corpus, const ExperimentConfig& config,
                                      Compressor& compressor) {
    return std::move(run_experiment_arms(corpus, config, {config.mask}, compressor).front());
}

double tp_at(const RocCurve& curve, double fp) {
    double best = 0.0;
    const auto& pts = curve.points;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].fp_rate == fp) best = std::max(best, pts[i].tp_rate);
        if (i + 1 < pts.size() && pts[i].fp_rate < fp && fp < pts[i + 1].fp_rate) {
            const double w = (fp - pts[i].fp_rate) / (pts[i + 1].fp_rate - pts[i].fp_rate);
            best = std::max(best, pts[i].tp_rate + w * (pts[i + 1].tp_rate - pts[i].tp_rate));
        }
    }
    return best;
}

namespace {

ScalarStats stats_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    ScalarStats s;
    s.min = values.front();
    s.max = values.back();
    double sum = 0.0;
    for (const double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    return s;
}

}  // namespace

double Aggregate::mean_band_width() const {
    if (fp_grid.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < fp_grid.size(); ++i) sum += tp_max[i] - tp_min[i];
    return sum / static_cast<double>(fp_grid.size());
}

Aggregate aggregate(const std::vector<RunResult>& runs) {
    if (runs.empty()) throw InvalidArgument("aggregate: no runs");
    Aggregate agg;
    std::vector<double> acc, fp, tp;
    for (const RunResult& r : runs) {
        acc.push_back(r.best.accuracy);
        fp.push_back(r.best.fp_rate);
        tp.push_back(r.best.tp_rate);
    }
    agg.accuracy = stats_of(acc);
    agg.fp_rate = stats_of(fp);
    agg.tp_rate = stats_of(tp);

    for (int i = 0; i <= 100; ++i) {
        const double x = i / 1000.0;
        std::vector<double> at;
        for (const RunResult& r : runs) at.push_back(tp_at(r.roc, x));
        const ScalarStats s = stats_of(std::move(at));
        agg.fp_grid.push_back(x);
        agg.tp_mean.push_back(s.mean);
        agg.tp_min.push_back(s.min);
        agg.tp_max.push_back(s.max);
    }
    return agg;
}

std::string run_result_json(const RunResult& run) {
    json j;
    j["run"] = run.run;
    j["seeds"] = {{"run", run.run_seed},
                  {"split", run.split_seed},
                  {"reference", run.reference_seed},
                  {"forest", run.forest_seed}};
    j["split"] = {{"reference", run.split.reference},
                  {"training", run.split.training},
                  {"test", run.split.test}};
    j["reference_ids"] = run.reference_ids;
    j["reference_fingerprint"] = run.forest.reference_fingerprint();
    j["best"] = {{"threshold", run.best.threshold},
                 {"accuracy", run.best.accuracy},
                 {"fp_rate", run.best.fp_rate},
                 {"tp_rate", run.best.tp_rate}};
    j["roc"] = {{"positives", run.roc.positives}, {"negatives", run.roc.negatives}, {"points", json::array()}};
    for (const RocPoint& p : run.roc.points)
        j["roc"]["points"].push_back({{"threshold", p.threshold},
                                      {"fp_rate", p.fp_rate},
                                      {"tp_rate", p.tp_rate},
                                      {"accuracy", p.accuracy}});
    j["test_scores"] = json::array();
    for (std::size_t i = 0; i < run.test_ids.size(); ++i)
        j["test_scores"].push_back({{"id", run.test_ids[i]}, {"score", run.test_scores[i]}});
    return j.dump(1) + "\n";
}

void write_aggregate_csv(const Aggregate& agg, const std::filesystem::path& path) {
    std::ostringstream out;
    out.precision(17);
    out << "fp_grid,tp_mean,tp_min,tp_max\n";
    for (std::size_t i = 0; i < agg.fp_grid.size(); ++i)
        out << agg.fp_grid[i] << ',' << agg.tp_mean[i] << ',' << agg.tp_min[i] << ',' << agg.tp_max[i] << '\n';
    write_text(path, out.str());
}

namespace {

struct RankSums {
    double u_a = 0.0;
    double tie_term = 0.0;  // sum of t^3 - t over tie groups
    bool ties = false;
};

RankSums rank_sums(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<std::pair<double, int>> all;
    for (const double v : a) all.emplace_back(v, 0);
    for (const double v : b) all.emplace_back(v, 1);
    std::sort(all.begin(), all.end());
    RankSums out;
    double rank_a = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        const double t = static_cast<double>(j - i);
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (all[k].second == 0) rank_a += midrank;
        if (t > 1) {
            out.ties = true;
            out.tie_term += t * t * t - t;
        }
        i = j;
    }
    const auto na = static_cast<double>(a.size());
    out.u_a = rank_a - na * (na + 1) / 2.0;
    return out;
}

void check_samples(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw InvalidArgument("mann_whitney_u: both samples must be non-empty");
}

// Number of arrangements of m a-values among m+n ranks with each U value.
std::vector<double> u_distribution(std::size_t m, std::size_t n) {
    // table[i][j] is the count vector for sizes (i, j); U_a ranges 0..i*j.
    std::vector<std::vector<std::vector<double>>> table(m + 1, std::vector<std::vector<double>>(n + 1));
    for (std::size_t i = 0; i <= m; ++i)
        for (std::size_t j = 0; j <= n; ++j) {
            auto& f = table[i][j];
            f.assign(i * j + 1, 0.0);
            if (i == 0 || j == 0) {
                f[0] = 1.0;
                continue;
            }
            // Largest value from a: it beats all j b-values (U += j); from b: no change.
            const auto& from_a = table[i - 1][j];
            const auto& from_b = table[i][j - 1];
            for (std::size_t u = 0; u < from_a.size(); ++u) f[u + j] += from_a[u];
            for (std::size_t u = 0; u < from_b.size(); ++u) f[u] += from_b[u];
        }
    return table[m][n];
}

}  // namespace

double mann_whitney_exact_p(const std::vector<double>& a, const std::vector<double>& b) {
    check_samples(a, b);
    const RankSums rs = rank_sums(a, b);
    if (rs.ties) throw InvalidArgument("exact Mann-Whitney p-value requires tie-free samples");
    const std::vector<double> f = u_distribution(a.size(), b.size());
    double total = 0.0, le = 0.0, ge = 0.0;
    const auto u = static_cast<std::size_t>(std::llround(rs.u_a));
    for (std::size_t k = 0; k < f.size(); ++k) {
        total += f[k];
        if (k <= u) le += f[k];
        if (k >= u) ge += f[k];
    }
    return std::min(1.0, 2.0 * std::min(le, ge) / total);
}

double mann_whitney_normal_p(const std::vector<double>& a, const std::vector<double>& b) {
    check_samples(a, b);
    const RankSums rs = rank_sums(a, b);
    const auto na = static_cast<double>(a.size());
    const auto nb = static_cast<double>(b.size());
    const double n = na + nb;
    const double mean = na * nb / 2.0;
    const double variance = na * nb / 12.0 * ((n + 1.0) - rs.tie_term / (n * (n - 1.0)));
    if (!(variance > 0.0)) return 1.0;
    const double z = std::max(0.0, std::abs(rs.u_a - mean) - 0.5) / std::sqrt(variance);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
    check_samples(a, b);
    const RankSums rs = rank_sums(a, b);
    MannWhitneyResult out;
    out.u_a = rs.u_a;
    out.u_b = static_cast<double>(a.size() * b.size()) - rs.u_a;
    out.u = std::min(out.u_a, out.u_b);
    out.exact = !rs.ties && a.size() + b.size() <= 12;
    out.p_value = out.exact ? mann_whitney_exact_p(a, b) : mann_whitney_normal_p(a, b);
    return out;
}

std::vector<ScanEntry> parse_scan_report(const std::string& json_text) {
    std::vector<ScanEntry> out;
    try {
        const json j = json::parse(json_text);
        if (!j.is_array()) throw Error("scan report: expected a JSON array");
        for (std::size_t i = 0; i < j.size(); ++i) {
            const json& e = j[i];
            ScanEntry entry;
            entry.sha256 = e.at("sha256").get<std::string>();
            std::transform(entry.sha256.begin(), entry.sha256.end(), entry.sha256.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            entry.engine = e.at("engine").get<std::string>();
            const auto verdict = e.at("verdict").get<std::string>();
            if (verdict == "detected") entry.verdict = Verdict::Detected;
            else if (verdict == "clean") entry.verdict = Verdict::Clean;
            else if (verdict == "skipped") entry.verdict = Verdict::Skipped;
            else throw Error("scan report entry " + std::to_string(i) + ": unknown verdict '" + verdict + "'");
            out.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("scan report: malformed JSON: ") + e.what());
    }
    return out;
}

std::vector<ScanEntry> load_scan_report(const std::filesystem::path& path) {
    const Bytes raw = read_file(path);
    return parse_scan_report(std::string(raw.begin(), raw.end()));
}

namespace {

void finish(EngineSummary& s) {
    const auto ratio = [](std::uint64_t num, std::uint64_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    s.tp_rate = ratio(s.detected_positives, s.scanned_positives);
    s.fp_rate = ratio(s.detected_negatives, s.scanned_negatives);
    const std::uint64_t scanned = s.scanned_positives + s.scanned_negatives;
    s.accuracy = ratio(s.detected_positives + (s.scanned_negatives - s.detected_negatives), scanned);
    s.detected = s.detected_positives + s.detected_negatives;
    s.not_detected = scanned - s.detected;
}

}  // namespace

ScanComparison compare_scan_report(const std::vector<ScanEntry>& report, const CorpusSet& corpus) {
    std::map<std::string, std::vector<std::size_t>> by_digest;
    for (std::size_t i = 0; i < corpus.size(); ++i) by_digest[corpus.samples()[i].digest].push_back(i);

    // engine -> sample index -> verdict (last entry wins)
    std::map<std::string, std::map<std::size_t, Verdict>> verdicts;
    std::set<std::string> unmatched;
    for (const ScanEntry& e : report) {
        const auto it = by_digest.find(e.sha256);
        if (it == by_digest.end()) {
            unmatched.insert(e.sha256);
            continue;
        }
        for (const std::size_t idx : it->second) verdicts[e.engine][idx] = e.verdict;
    }

    ScanComparison out;
    std::vector<int> any(corpus.size(), -1);  // -1 unscanned, 0 clean, 1 detected
    for (const auto& [engine, per_sample] : verdicts) {
        EngineSummary s;
        s.engine = engine;
        for (const auto& [idx, verdict] : per_sample) {
            if (verdict == Verdict::Skipped) continue;
            const bool positive = corpus.samples()[idx].label == Label::Positive;
            const bool detected = verdict == Verdict::Detected;
            (positive ? s.scanned_positives : s.scanned_negatives)++;
            if (detected) (positive ? s.detected_positives : s.detected_negatives)++;
            any[idx] = std::max(any[idx], detected ? 1 : 0);
        }
        finish(s);
        out.engines.push_back(std::move(s));
    }

    EngineSummary& all = out.combined;
    all.engine = "all";
    for (std::size_t idx = 0; idx < corpus.size(); ++idx) {
        if (any[idx] < 0) {
            ++out.unscanned;
            continue;
        }
        const bool positive = corpus.samples()[idx].label == Label::Positive;
        (positive ? all.scanned_positives : all.scanned_negatives)++;
        if (any[idx] == 1) (positive ? all.detected_positives : all.detected_negatives)++;
    }
    finish(all);
    out.unmatched.assign(unmatched.begin(), unmatched.end());
    return out;
}

std::string scan_comparison_json(const ScanComparison& comparison) {
    const auto row = [](const EngineSummary& s) {
        return json{{"engine", s.engine},
                    {"fp_rate", s.fp_rate},
                    {"tp_rate", s.tp_rate},
                    {"accuracy", s.accuracy},
                    {"detected", s.detected},
                    {"not_detected", s.not_detected},
                    {"scanned_positives", s.scanned_positives},
                    {"scanned_negatives", s.scanned_negatives}};
    };
    json j;
    j["engines"] = json::array();
    for (const auto& s : comparison.engines) j["engines"].push_back(row(s));
    j["combined"] = row(comparison.combined);
    j["unscanned"] = comparison.unscanned;
    j["unmatched"] = comparison.unmatched;
    return j.dump(2) + "\n";
}

}  // namespace ncdforest
