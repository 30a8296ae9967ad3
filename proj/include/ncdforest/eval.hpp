#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ncdforest/compressor.hpp"
#include "ncdforest/corpus.hpp"
#include "ncdforest/features.hpp"
#include "ncdforest/forest.hpp"

namespace ncdforest {

struct RocPoint {
    double threshold = 0.0;
    double fp_rate = 0.0;
    double tp_rate = 0.0;
    double accuracy = 0.0;
    std::uint64_t true_positives = 0;
    std::uint64_t false_positives = 0;

    friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

/// Points ordered by decreasing threshold; a sample is predicted Positive
/// iff score >= threshold.
struct RocCurve {
    std::vector<RocPoint> points;
    std::uint64_t positives = 0;
    std::uint64_t negatives = 0;

    friend bool operator==(const RocCurve&, const RocCurve&) = default;
};

/// Sweeps a sentinel above the highest score, every distinct score, and a
/// sentinel below the lowest. Throws InvalidArgument unless both labels occur.
RocCurve roc(const std::vector<double>& scores, const std::vector<Label>& labels);

/// Highest accuracy; ties go to lower FP, then lower threshold.
RocPoint best_operating_point(const RocCurve& curve);

struct ExperimentConfig {
    std::size_t n_ref = 200;
    std::size_t n_train = 600;
    std::size_t n_test = 600;
    /// Reference count n; the whole reference pool when 0.
    std::size_t n_features = 0;
    ForestParams forest;
    FeatureMask mask = FeatureMask::Combined;
    std::size_t runs = 30;
    std::uint64_t seed = 1;
    /// Fraction of the training draw that is Negative (0.5 = balanced).
    double training_negative_fraction = 0.5;
    /// Draw split thresholds from the test vectors instead of training.
    bool thresholds_from_test = false;
    unsigned threads = 0;

    std::size_t reference_count() const { return n_features == 0 ? n_ref : n_features; }
    SplitCounts split_counts() const;
    void validate() const;
};

struct RunResult {
    std::size_t run = 0;
    std::uint64_t run_seed = 0;
    std::uint64_t split_seed = 0;
    std::uint64_t reference_seed = 0;
    std::uint64_t forest_seed = 0;
    ExperimentSplit split;
    std::vector<std::string> reference_ids;
    std::vector<std::string> test_ids;
    std::vector<double> test_scores;
    RocPoint best;
    RocCurve roc;
    Forest forest;
};

/// Runs every run independently: seeded split, reference selection, feature
/// extraction, forest training, scoring of the test set. Corpus size is
/// checked before any compression work.
std::vector<RunResult> run_experiment(const CorpusSet& corpus, const ExperimentConfig& config,
                                      Compressor& compressor);

/// Same runs, one forest per mask; features are extracted once per run.
/// Element [m][r] is mask m, run r.
std::vector<std::vector<RunResult>> run_experiment_arms(const CorpusSet& corpus,
                                                        const ExperimentConfig& config,
                                                        const std::vector<FeatureMask>& masks,
                                                        Compressor& compressor);

struct ScalarStats {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct Aggregate {
    ScalarStats accuracy;
    ScalarStats fp_rate;
    ScalarStats tp_rate;
    std::vector<double> fp_grid;
    std::vector<double> tp_mean;
    std::vector<double> tp_min;
    std::vector<double> tp_max;

    /// Mean of tp_max - tp_min over the grid.
    double mean_band_width() const;
};

/// TP interpolated at FP in [0, 0.10] with step 0.001, then reduced
/// pointwise across runs. Sums are taken in sorted order so the result does
/// not depend on run order.
Aggregate aggregate(const std::vector<RunResult>& runs);

/// Linear interpolation of TP along the curve at `fp`; on vertical segments
/// the largest TP is taken.
double tp_at(const RocCurve& curve, double fp);

std::string run_result_json(const RunResult& run);
void write_aggregate_csv(const Aggregate& agg, const std::filesystem::path& path);

struct MannWhitneyResult {
    double u_a = 0.0;  // U statistic of the first sample
    double u_b = 0.0;
    double u = 0.0;    // min(u_a, u_b)
    double p_value = 1.0;
    bool exact = false;
};

/// Two-sided Mann-Whitney U with midranks. Exact null distribution when
/// |a| + |b| <= 12 and there are no ties; otherwise normal approximation
/// with tie and continuity corrections.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);
/// Forces one path; for cross-checks.
double mann_whitney_exact_p(const std::vector<double>& a, const std::vector<double>& b);
double mann_whitney_normal_p(const std::vector<double>& a, const std::vector<double>& b);

enum class Verdict { Detected, Clean, Skipped };

struct ScanEntry {
    std::string sha256;
    std::string engine;
    Verdict verdict = Verdict::Skipped;
};

/// JSON array of {"sha256", "engine", "verdict": "detected"|"clean"|"skipped"}.
std::vector<ScanEntry> parse_scan_report(const std::string& json_text);
std::vector<ScanEntry> load_scan_report(const std::filesystem::path& path);

struct EngineSummary {
    std::string engine;  // "all" for the combined row
    std::uint64_t scanned_positives = 0;
    std::uint64_t scanned_negatives = 0;
    std::uint64_t detected_positives = 0;
    std::uint64_t detected_negatives = 0;
    double tp_rate = 0.0;
    double fp_rate = 0.0;
    double accuracy = 0.0;
    std::uint64_t detected = 0;
    std::uint64_t not_detected = 0;
};

struct ScanComparison {
    std::vector<EngineSummary> engines;  // sorted by engine name
    EngineSummary combined;              // detected by at least one engine
    std::uint64_t unscanned = 0;         // corpus samples with no verdict
    std::vector<std::string> unmatched;  // report digests not in the corpus
};

ScanComparison compare_scan_report(const std::vector<ScanEntry>& report,
                                   const CorpusSet& corpus);
std::string scan_comparison_json(const ScanComparison& comparison);

}  // namespace ncdforest
