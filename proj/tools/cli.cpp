#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "csv.hpp"
#include "ncdforest/bytes.hpp"
#include "ncdforest/cluster.hpp"
#include "ncdforest/compressor.hpp"
#include "ncdforest/corpus.hpp"
#include "ncdforest/distance.hpp"
#include "ncdforest/error.hpp"
#include "ncdforest/eval.hpp"
#include "ncdforest/features.hpp"
#include "ncdforest/forest.hpp"
#include "ncdforest/parallel.hpp"
#include "ncdforest/synth.hpp"

namespace ncdforest::cli {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void diagnose(std::ostream& err, std::string_view level, std::string_view kind, const std::string& message) {
    err << json{{"level", level}, {"kind", kind}, {"message", message}}.dump() << '\n';
}

template <class T>
json to_json(const T& v) {
    return json(v);
}
template <class T>
json to_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}
template <class T>
void from_json(const json& j, T& v) {
    v = j.get<T>();
}
template <class T>
void from_json(const json& j, std::optional<T>& v) {
    if (j.is_null()) v.reset();
    else v = j.get<T>();
}

// One subcommand. Options are bound to variables so a JSON config file can
// fill whatever the command line left unset, and a run can persist the
// settings it used.
class Command {
public:
    Command(CLI::App& app, const std::string& name, const std::string& description)
        : sub_(app.add_subcommand(name, description)) {
        sub_->add_option("--config", config_path_, "JSON object of option values; flags override it");
        bind("threads", threads, "Worker threads (0 = all cores)", false);
        bind("cache", cache_path, "Compressed-size cache file", false);
    }

    template <class T>
    CLI::Option* bind(const std::string& key, T& var, const std::string& description, bool persist = true) {
        CLI::Option* opt = sub_->add_option("--" + key, var, description);
        bindings_.push_back({opt, key, persist, [&var](const json& j) { from_json(j, var); },
                             [&var] { return to_json(var); }});
        return opt;
    }

    CLI::Option* flag(const std::string& key, bool& var, const std::string& description) {
        CLI::Option* opt = sub_->add_flag("--" + key, var, description);
        bindings_.push_back({opt, key, true, [&var](const json& j) { var = j.get<bool>(); },
                             [&var] { return json(var); }});
        return opt;
    }

    bool active() const { return sub_->parsed(); }
    std::string name() const { return sub_->get_name(); }

    void apply_config() {
        if (config_path_.empty()) return;
        std::ifstream in(config_path_);
        if (!in) throw UsageError("cannot read config " + config_path_);
        json cfg;
        try {
            cfg = json::parse(in);
        } catch (const json::exception& e) {
            throw UsageError("config " + config_path_ + " is not valid JSON: " + e.what());
        }
        if (!cfg.is_object()) throw UsageError("config " + config_path_ + " must hold a JSON object");
        for (const auto& [key, value] : cfg.items()) {
            const auto it = std::find_if(bindings_.begin(), bindings_.end(),
                                         [&](const Binding& b) { return b.key == key; });
            if (it == bindings_.end()) throw UsageError("config " + config_path_ + ": unknown option '" + key + "'");
            if (it->option->count() > 0) continue;
            try {
                it->set(value);
            } catch (const json::exception& e) {
                throw UsageError("config " + config_path_ + ": bad value for '" + key + "': " + e.what());
            }
        }
    }

    json settings() const {
        json out = json::object();
        for (const Binding& b : bindings_)
            if (b.persist) out[b.key] = b.get();
        return out;
    }

    std::function<int(std::ostream&, std::ostream&)> handler;
    unsigned threads = 0;
    std::string cache_path;

private:
    struct Binding {
        CLI::Option* option;
        std::string key;
        bool persist;
        std::function<void(const json&)> set;
        std::function<json()> get;
    };

    CLI::App* sub_;
    std::string config_path_;
    std::vector<Binding> bindings_;
};

struct CompressorOptions {
    std::string backend = "lzma";
    int level = 6;
    std::uint64_t dictionary = CompressorConfig{}.dictionary_bytes;

    void bind(Command& cmd) {
        cmd.bind("backend", backend, "Compressor backend: lzma, deflate or bwt");
        cmd.bind("level", level, "Compression level");
        cmd.bind("dictionary", dictionary, "Dictionary/window size in bytes");
    }

    CompressorConfig config() const {
        CompressorConfig cfg;
        try {
            cfg.backend = parse_backend(backend);
            cfg.level = level;
            cfg.dictionary_bytes = dictionary;
            cfg.validate();
        } catch (const InvalidArgument& e) {
            throw UsageError(e.what());
        }
        return cfg;
    }
};

// Keeps the cache and compressor together and reports hit counters on exit.
struct Session {
    std::shared_ptr<SizeCache> cache;
    std::unique_ptr<Compressor> compressor;

    Session(const Command& cmd, const CompressorConfig& cfg)
        : cache(cmd.cache_path.empty() ? std::make_shared<SizeCache>()
                                       : std::make_shared<SizeCache>(fs::path(cmd.cache_path))),
          compressor(std::make_unique<Compressor>(cfg, cache)) {}

    void finish(std::ostream& err) {
        cache->flush();
        err << json{{"level", "info"},
                    {"kind", "cache"},
                    {"hits", compressor->cache_hits()},
                    {"misses", compressor->cache_misses()}}
                   .dump()
            << '\n';
    }
};

void require(bool present, const std::string& what) {
    if (!present) throw UsageError(what + " is required");
}

fs::path existing(const std::string& path, const std::string& what) {
    require(!path.empty(), what);
    if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
    return path;
}

// Sources are manifest files or "malware:DIR" / "benign:DIR".
CorpusSet load_corpus(const std::vector<std::string>& sources, std::ostream& err) {
    require(!sources.empty(), "--corpus");
    CorpusSet all;
    for (const std::string& source : sources) {
        std::optional<Label> label;
        std::string path = source;
        if (const auto colon = source.find(':'); colon != std::string::npos) {
            const std::string prefix = source.substr(0, colon);
            if (prefix == "malware" || prefix == "benign") {
                label = parse_label(prefix);
                path = source.substr(colon + 1);
            }
        }
        if (!fs::exists(path)) throw UsageError("corpus source not found: " + path);
        if (fs::is_directory(path) && !label)
            throw UsageError("directory source needs a label, e.g. malware:" + path);
        IngestResult result = ingest(path, label.value_or(Label::Negative));
        for (const SkippedFile& s : result.skipped)
            err << json{{"level", "warning"}, {"kind", "skipped"}, {"path", s.path.string()}, {"reason", s.reason}}
                       .dump()
                << '\n';
        all = merge(all, result.corpus);
    }
    return all;
}

// Writes stdout-or-file text outputs.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") out << text;
    else write_text(path, text);
}

std::string read_text(const fs::path& path) {
    const Bytes raw = read_file(path);
    return std::string(raw.begin(), raw.end());
}

// Records produced files and writes an index with their digests.
class Artifacts {
public:
    explicit Artifacts(fs::path root) : root_(std::move(root)) {}

    const fs::path& root() const { return root_; }

    fs::path add(const fs::path& relative) {
        paths_.push_back(relative.generic_string());
        return root_ / relative;
    }

    void write_text_file(const fs::path& relative, const std::string& text) { write_text(add(relative), text); }

    void write_manifest() const {
        std::vector<std::string> sorted = paths_;
        std::sort(sorted.begin(), sorted.end());
        json j;
        j["artifacts"] = json::array();
        for (const auto& p : sorted)
            j["artifacts"].push_back(
                {{"path", p}, {"bytes", fs::file_size(root_ / p)}, {"sha256", sha256_file(root_ / p)}});
        write_text(root_ / "manifest.json", j.dump(2) + "\n");
    }

private:
    fs::path root_;
    std::vector<std::string> paths_;
};

std::string fixed_index(std::size_t i) {
    std::string s = std::to_string(i);
    return std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

json stats_json(const ScalarStats& s) { return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}}; }

json mwu_json(const MannWhitneyResult& r) {
    return {{"u_a", r.u_a}, {"u_b", r.u_b}, {"u", r.u}, {"p_value", r.p_value}, {"exact", r.exact}};
}

std::vector<double> accuracies_from_arm(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw UsageError("run directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("run_", 0) == 0 && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw UsageError("no run_*.json files in " + dir.string());
    std::vector<double> acc;
    for (const auto& f : files) acc.push_back(json::parse(read_text(f)).at("best").at("accuracy").get<double>());
    return acc;
}

// ---------------------------------------------------------------------------

struct IngestArgs {
    std::vector<std::string> corpus;
    std::string out;
};

struct DedupeArgs {
    std::vector<std::string> corpus;
    std::string out;
    std::string report;
};

struct CompressArgs {
    std::vector<std::string> corpus;
    std::string out;
    CompressorOptions comp;
};

struct NormalityArgs {
    std::vector<std::string> corpus;
    std::size_t max_files = 6;
    std::size_t synthetic = 6;
    std::uint64_t synthetic_size = 4096;
    std::uint64_t seed = 1;
    std::string out;
    CompressorOptions comp;
};

struct SelfCurveArgs {
    std::vector<std::uint64_t> sizes{1024, 4096, 16384, 65536, 262144, 1048576};
    std::vector<std::string> backends{"lzma"};
    std::uint64_t seed = 1;
    std::string out;
    CompressorOptions comp;
};

struct MatrixArgs {
    std::vector<std::string> corpus;
    std::optional<double> threshold;
    std::string out;
    std::string csv;
    std::string checkpoint;
    CompressorOptions comp;
};

struct SavingsArgs {
    std::vector<std::string> corpus;
    std::vector<double> thresholds{0.8, 0.85, 0.9, 0.95, 0.99, 1.0};
    std::string out;
    CompressorOptions comp;
};

struct ExperimentArgs {
    std::vector<std::string> corpus;
    std::string out;
    std::size_t n_ref = 200;
    std::size_t n_train = 600;
    std::size_t n_test = 600;
    std::size_t n_features = 0;
    std::size_t runs = 30;
    std::uint64_t seed = 1;
    std::vector<std::string> arms{"combined"};
    double training_bias = 0.5;
    bool thresholds_from_test = false;
    std::size_t trees = 400;
    std::size_t features_per_branch = 30;
    double min_gain = 0.001;
    std::size_t max_depth = 5;
    CompressorOptions comp;
};

struct ClusterArgs {
    std::string matrix;
    std::vector<std::string> corpus;
    std::size_t k = 35;
    std::uint64_t seed = 0;
    std::size_t max_iters = 1000;
    bool use_lower_bound = false;
    std::string out;
};

struct ImportanceArgs {
    std::vector<std::string> model;
    std::string out;
};

struct CompareArgs {
    std::string report;
    std::vector<std::string> corpus;
    std::string out;
};

struct MwuArgs {
    std::vector<double> a;
    std::vector<double> b;
    std::string a_runs;
    std::string b_runs;
    std::string out;
};

struct SynthArgs {
    std::string kind = "family";
    std::string out;
    std::size_t per_label = 0;
    std::uint64_t seed = 1;
};

int do_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
    require(!a.out.empty(), "--out");
    const CorpusSet corpus = load_corpus(a.corpus, err);
    write_manifest(corpus, a.out);
    out << json{{"samples", corpus.size()},
                {"malware", corpus.count(Label::Positive)},
                {"benign", corpus.count(Label::Negative)},
                {"manifest", a.out}}
               .dump(2)
        << '\n';
    return kExitOk;
}

int do_dedupe(const DedupeArgs& a, std::ostream& out, std::ostream& err) {
    require(!a.out.empty(), "--out");
    const CorpusSet corpus = load_corpus(a.corpus, err);
    const DedupeResult result = dedupe(corpus);
    write_manifest(result.corpus, a.out);
    if (!a.report.empty()) write_dedupe_report(result.removed, a.report);
    out << json{{"kept", result.corpus.size()}, {"removed", result.removed.size()}}.dump(2) << '\n';
    return kExitOk;
}

int do_compress(const Command& cmd, const CompressArgs& a, std::ostream&, std::ostream& err) {
    const CorpusSet corpus = load_corpus(a.corpus, err);
    Session session(cmd, a.comp.config());
    const auto& samples = corpus.samples();
    std::vector<std::uint64_t> z(samples.size());
    parallel_for(samples.size(), cmd.threads,
                 [&](std::size_t i) { z[i] = session.compressor->compressed_size(samples[i]); });
    std::ostringstream table;
    table.precision(17);
    table << "sample_id,size_bytes,z_bytes,ratio\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double ratio = samples[i].size_bytes == 0
                                 ? std::numeric_limits<double>::quiet_NaN()
                                 : static_cast<double>(z[i]) / static_cast<double>(samples[i].size_bytes);
        table << samples[i].id << ',' << samples[i].size_bytes << ',' << z[i] << ',' << ratio << '\n';
    }
    if (!a.out.empty()) write_text(a.out, table.str());
    session.finish(err);
    return kExitOk;
}

int do_normality(const Command& cmd, const NormalityArgs& a, std::ostream& out, std::ostream& err) {
    std::vector<Bytes> suite;
    if (!a.corpus.empty()) {
        const CorpusSet corpus = load_corpus(a.corpus, err);
        for (std::size_t i = 0; i < corpus.size() && i < a.max_files; ++i)
            suite.push_back(read_file(corpus.samples()[i].path));
    } else {
        for (std::size_t i = 0; i < a.synthetic; ++i) {
            Rng rng(derive_seed(a.seed, i));
            suite.push_back(synth::mixed_content(a.synthetic_size, rng));
        }
    }
    if (suite.empty()) throw UsageError("normality needs at least one file");
    Session session(cmd, a.comp.config());
    const NormalityReport report = normality_report(*session.compressor, suite);
    emit(a.out, normality_report_json(report), out);
    session.finish(err);
    return kExitOk;
}

int do_selfcurve(const Command& cmd, const SelfCurveArgs& a, std::ostream& out, std::ostream& err) {
    if (a.sizes.empty()) throw UsageError("--sizes needs at least one value");
    std::ostringstream table;
    table.precision(17);
    table << "backend,size,ncd,error\n";
    for (const std::string& backend : a.backends) {
        CompressorOptions opts = a.comp;
        opts.backend = backend;
        Session session(cmd, opts.config());
        for (const SelfDistancePoint& p : self_distance_curve(a.sizes, *session.compressor, a.seed)) {
            table << backend << ',' << p.size << ',';
            if (p.ncd) table << *p.ncd;
            table << ',' << csv::escape(p.error) << '\n';
        }
        session.finish(err);
    }
    emit(a.out, table.str(), out);
    return kExitOk;
}

int do_matrix(const Command& cmd, const MatrixArgs& a, std::ostream&, std::ostream& err) {
    require(!a.out.empty(), "--out");
    if (a.threshold && !(*a.threshold >= 0.0 && *a.threshold <= 1.0))
        throw UsageError("--threshold must lie in [0, 1]");
    const CorpusSet corpus = load_corpus(a.corpus, err);
    Session session(cmd, a.comp.config());
    MatrixOptions options;
    options.prune_threshold = a.threshold;
    options.threads = cmd.threads;
    if (!a.checkpoint.empty()) options.checkpoint = fs::path(a.checkpoint);
    const DistanceMatrix matrix = pairwise_matrix(corpus, *session.compressor, options);
    write_matrix(matrix, a.out);
    if (!a.csv.empty()) write_matrix_csv(matrix, a.csv);
    session.finish(err);
    return kExitOk;
}

int do_savings(const Command& cmd, const SavingsArgs& a, std::ostream&, std::ostream& err) {
    require(!a.out.empty(), "--out");
    const CorpusSet corpus = load_corpus(a.corpus, err);
    Session session(cmd, a.comp.config());
    std::vector<SavingsPoint> curve;
    try {
        curve = savings_curve(corpus, *session.compressor, a.thresholds, cmd.threads);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    write_savings_csv(curve, a.out);
    session.finish(err);
    return kExitOk;
}

int do_experiment(const Command& cmd, const ExperimentArgs& a, std::ostream& out, std::ostream& err) {
    require(!a.out.empty(), "--out");
    ExperimentConfig cfg;
    cfg.n_ref = a.n_ref;
    cfg.n_train = a.n_train;
    cfg.n_test = a.n_test;
    cfg.n_features = a.n_features;
    cfg.runs = a.runs;
    cfg.seed = a.seed;
    cfg.training_negative_fraction = a.training_bias;
    cfg.thresholds_from_test = a.thresholds_from_test;
    cfg.threads = cmd.threads;
    cfg.forest.n_trees = a.trees;
    cfg.forest.features_per_branch = a.features_per_branch;
    cfg.forest.min_gain_bits = a.min_gain;
    cfg.forest.max_depth = a.max_depth;
    std::vector<FeatureMask> masks;
    try {
        cfg.validate();
        if (a.arms.empty()) throw InvalidArgument("--arms needs at least one mask");
        for (const auto& arm : a.arms) {
            const FeatureMask m = parse_mask(arm);
            if (std::find(masks.begin(), masks.end(), m) != masks.end())
                throw InvalidArgument("--arms lists '" + arm + "' twice");
            masks.push_back(m);
        }
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const CompressorConfig comp_cfg = a.comp.config();
    const CorpusSet corpus = load_corpus(a.corpus, err);
    Session session(cmd, comp_cfg);
    const auto results = run_experiment_arms(corpus, cfg, masks, *session.compressor);

    Artifacts artifacts(a.out);
    artifacts.write_text_file("config.json", cmd.settings().dump(2) + "\n");
    json summary;
    summary["arms"] = json::object();
    for (std::size_t m = 0; m < masks.size(); ++m) {
        const std::string arm(mask_name(masks[m]));
        for (const RunResult& r : results[m]) {
            const std::string idx = fixed_index(r.run);
            artifacts.write_text_file(fs::path(arm) / ("run_" + idx + ".json"), run_result_json(r));
            save_forest(r.forest, artifacts.add(fs::path(arm) / ("model_" + idx + ".json")));
        }
        const Aggregate agg = aggregate(results[m]);
        write_aggregate_csv(agg, artifacts.add(fs::path(arm) / "aggregate.csv"));
        std::vector<double> acc;
        for (const RunResult& r : results[m]) acc.push_back(r.best.accuracy);
        summary["arms"][arm] = {{"runs", results[m].size()},
                                {"accuracy", stats_json(agg.accuracy)},
                                {"fp_rate", stats_json(agg.fp_rate)},
                                {"tp_rate", stats_json(agg.tp_rate)},
                                {"band_width", agg.mean_band_width()},
                                {"accuracies", acc}};
    }
    summary["mann_whitney"] = json::array();
    for (std::size_t i = 0; i < masks.size(); ++i)
        for (std::size_t j = i + 1; j < masks.size(); ++j) {
            std::vector<double> ai, aj;
            for (const RunResult& r : results[i]) ai.push_back(r.best.accuracy);
            for (const RunResult& r : results[j]) aj.push_back(r.best.accuracy);
            json row = mwu_json(mann_whitney_u(ai, aj));
            row["a"] = mask_name(masks[i]);
            row["b"] = mask_name(masks[j]);
            summary["mann_whitney"].push_back(row);
        }
    artifacts.write_text_file("summary.json", summary.dump(2) + "\n");
    artifacts.write_manifest();
    out << summary.dump(2) << '\n';
    session.finish(err);
    return kExitOk;
}

int do_cluster(const Command& cmd, const ClusterArgs& a, std::ostream& out, std::ostream& err) {
    require(!a.out.empty(), "--out");
    const fs::path matrix_path = existing(a.matrix, "--matrix");
    const CorpusSet corpus = load_corpus(a.corpus, err);
    const DistanceMatrix matrix = read_matrix(matrix_path);
    KMedoidsOptions options;
    options.k = a.k;
    options.seed = a.seed;
    options.max_iters = a.max_iters;
    options.pruned = a.use_lower_bound ? PrunedEntries::UseLowerBound : PrunedEntries::Reject;
    const ClusterAssignment assignment = kmedoids(matrix, options);
    const ClusterLabelling labelling = label_clusters(assignment, labels_for(matrix, corpus));

    Artifacts artifacts(a.out);
    artifacts.write_text_file("config.json", cmd.settings().dump(2) + "\n");
    write_assignment_csv(assignment, matrix, artifacts.add("assignment.csv"));
    const std::string metrics = cluster_metrics_json(assignment, labelling);
    artifacts.write_text_file("metrics.json", metrics);
    artifacts.write_manifest();
    out << metrics;
    return kExitOk;
}

int do_importance(const ImportanceArgs& a, std::ostream& out, std::ostream&) {
    require(!a.model.empty(), "--model");
    std::ostringstream table;
    table.precision(17);
    table << "model,feature,importance\n";
    for (const std::string& path : a.model) {
        const Forest forest = load_forest(existing(path, "--model"));
        const std::vector<double> imp = feature_importance(forest);
        for (std::size_t i = 0; i < imp.size(); ++i) table << csv::escape(path) << ',' << i << ',' << imp[i] << '\n';
    }
    emit(a.out, table.str(), out);
    return kExitOk;
}

int do_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
    const fs::path report_path = existing(a.report, "--report");
    const CorpusSet corpus = load_corpus(a.corpus, err);
    const ScanComparison comparison = compare_scan_report(load_scan_report(report_path), corpus);
    for (const auto& digest : comparison.unmatched)
        err << json{{"level", "warning"}, {"kind", "unmatched"}, {"sha256", digest}}.dump() << '\n';
    emit(a.out, scan_comparison_json(comparison), out);
    return kExitOk;
}

int do_mwu(const MwuArgs& a, std::ostream& out, std::ostream&) {
    if (!a.a.empty() && !a.a_runs.empty()) throw UsageError("give --a or --a-runs, not both");
    if (!a.b.empty() && !a.b_runs.empty()) throw UsageError("give --b or --b-runs, not both");
    const std::vector<double> xs = a.a_runs.empty() ? a.a : accuracies_from_arm(a.a_runs);
    const std::vector<double> ys = a.b_runs.empty() ? a.b : accuracies_from_arm(a.b_runs);
    if (xs.empty() || ys.empty()) throw UsageError("both samples need at least one value");
    emit(a.out, mwu_json(mann_whitney_u(xs, ys)).dump(2) + "\n", out);
    return kExitOk;
}

int do_synth(const SynthArgs& a, std::ostream& out, std::ostream&) {
    require(!a.out.empty(), "--out");
    CorpusSet corpus;
    if (a.kind == "family") {
        synth::FamilyCorpusSpec spec;
        if (a.per_label > 0) spec.per_family = a.per_label;
        spec.seed = a.seed;
        corpus = synth::write_family_corpus(a.out, spec);
    } else if (a.kind == "ratio") {
        synth::RatioCorpusSpec spec;
        if (a.per_label > 0) spec.per_class = a.per_label;
        spec.seed = a.seed;
        corpus = synth::write_ratio_corpus(a.out, spec);
    } else {
        throw UsageError("--kind must be 'family' or 'ratio'");
    }
    out << json{{"samples", corpus.size()},
                {"manifest", (fs::path(a.out) / "manifest.csv").string()}}
               .dump(2)
        << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"NCD and random-forest classification of binary files", "ncdforest"};
    app.require_subcommand(1, 1);
    std::vector<std::unique_ptr<Command>> commands;
    const auto add = [&](const std::string& name, const std::string& description) -> Command& {
        commands.push_back(std::make_unique<Command>(app, name, description));
        return *commands.back();
    };

    IngestArgs ingest_args;
    {
        Command& c = add("ingest", "Build a manifest from directories and manifests");
        c.bind("corpus", ingest_args.corpus, "Manifest CSV or malware:DIR / benign:DIR (repeatable)");
        c.bind("out", ingest_args.out, "Output manifest CSV");
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_ingest(ingest_args, o, e); };
    }
    DedupeArgs dedupe_args;
    {
        Command& c = add("dedupe", "Remove byte-identical duplicates");
        c.bind("corpus", dedupe_args.corpus, "Corpus sources (repeatable)");
        c.bind("out", dedupe_args.out, "Output manifest CSV of the kept samples");
        c.bind("report", dedupe_args.report, "Dedup report CSV");
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_dedupe(dedupe_args, o, e); };
    }
    CompressArgs compress_args;
    {
        Command& c = add("compress", "Compress every sample once to warm the cache");
        c.bind("corpus", compress_args.corpus, "Corpus sources (repeatable)");
        c.bind("out", compress_args.out, "Optional CSV of sizes and ratios");
        compress_args.comp.bind(c);
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_compress(c, compress_args, o, e); };
    }
    NormalityArgs normality_args;
    {
        Command& c = add("normality", "Measure normal-compressor axiom deviations");
        c.bind("corpus", normality_args.corpus, "Corpus sources; synthetic files when omitted");
        c.bind("max-files", normality_args.max_files, "Files taken from the corpus (triples are cubic)");
        c.bind("synthetic", normality_args.synthetic, "Synthetic suite size");
        c.bind("synthetic-size", normality_args.synthetic_size, "Bytes per synthetic file");
        c.bind("seed", normality_args.seed, "Synthetic suite seed");
        c.bind("out", normality_args.out, "Report JSON (stdout when omitted)");
        normality_args.comp.bind(c);
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_normality(c, normality_args, o, e); };
    }
    SelfCurveArgs selfcurve_args;
    {
        Command& c = add("selfcurve", "NCD(x,x) against file size per backend");
        c.bind("sizes", selfcurve_args.sizes, "File sizes in bytes");
        c.bind("backends", selfcurve_args.backends, "Backends to compare");
        c.bind("seed", selfcurve_args.seed, "Test-file seed");
        c.bind("out", selfcurve_args.out, "CSV backend,size,ncd,error (stdout when omitted)");
        selfcurve_args.comp.bind(c);
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_selfcurve(c, selfcurve_args, o, e); };
    }
    MatrixArgs matrix_args;
    {
        Command& c = add("matrix", "Pairwise NCD matrix with optional lower-bound pruning");
        c.bind("corpus", matrix_args.corpus, "Corpus sources (repeatable)");
        c.bind("threshold", matrix_args.threshold, "Prune pairs whose lower bound reaches this value");
        c.bind("out", matrix_args.out, "Binary matrix file");
        c.bind("csv", matrix_args.csv, "Optional CSV export");
        c.bind("checkpoint", matrix_args.checkpoint, "Checkpoint file for resumable runs");
        matrix_args.comp.bind(c);
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_matrix(c, matrix_args, o, e); };
    }
    SavingsArgs savings_args;
    {
        Command& c = add("savings", "Fraction of pairs the lower bound prunes per threshold");
        c.bind("corpus", savings_args.corpus, "Corpus sources (repeatable)");
        c.bind("thresholds", savings_args.thresholds, "Thresholds in [0, 1]");
        c.bind("out", savings_args.out, "Curve CSV");
        savings_args.comp.bind(c);
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_savings(c, savings_args, o, e); };
    }
    ExperimentArgs experiment_args;
    {
        Command& c = add("experiment", "Repeated split/train/test runs of the forest classifier");
        ExperimentArgs& a = experiment_args;
        c.bind("corpus", a.corpus, "Corpus sources (repeatable)");
        c.bind("out", a.out, "Results directory");
        c.bind("n-ref", a.n_ref, "Reference pool size (even)");
        c.bind("n-train", a.n_train, "Training set size");
        c.bind("n-test", a.n_test, "Test set size (even)");
        c.bind("n-features", a.n_features, "Reference count n (0 = whole pool)");
        c.bind("runs", a.runs, "Number of runs");
        c.bind("seed", a.seed, "Base seed");
        c.bind("arms", a.arms, "Feature masks: combined, ncd, ratio");
        c.bind("training-bias", a.training_bias, "Benign fraction of the training draw");
        c.flag("thresholds-from-test", a.thresholds_from_test, "Draw split thresholds from test vectors");
        c.bind("trees", a.trees, "Trees per forest");
        c.bind("features-per-branch", a.features_per_branch, "Candidate splits per node");
        c.bind("min-gain", a.min_gain, "Minimum information gain in bits");
        c.bind("max-depth", a.max_depth, "Maximum branch levels");
        a.comp.bind(c);
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_experiment(c, experiment_args, o, e); };
    }
    ClusterArgs cluster_args;
    {
        Command& c = add("cluster", "k-medoids over a saved matrix");
        c.bind("matrix", cluster_args.matrix, "Matrix file from `matrix`");
        c.bind("corpus", cluster_args.corpus, "Corpus sources for labels");
        c.bind("k", cluster_args.k, "Number of clusters");
        c.bind("seed", cluster_args.seed, "Initial medoid seed");
        c.bind("max-iters", cluster_args.max_iters, "Maximum passes");
        c.flag("use-lower-bound", cluster_args.use_lower_bound, "Use bounds for pruned entries");
        c.bind("out", cluster_args.out, "Results directory");
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_cluster(c, cluster_args, o, e); };
    }
    ImportanceArgs importance_args;
    {
        Command& c = add("importance", "Fraction of trees using each feature");
        c.bind("model", importance_args.model, "Model JSON files (repeatable)");
        c.bind("out", importance_args.out, "CSV output (stdout when omitted)");
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_importance(importance_args, o, e); };
    }
    CompareArgs compare_args;
    {
        Command& c = add("compare-scans", "Summarise a multi-engine scan report against labels");
        c.bind("report", compare_args.report, "Scan report JSON");
        c.bind("corpus", compare_args.corpus, "Corpus sources for labels");
        c.bind("out", compare_args.out, "JSON output (stdout when omitted)");
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_compare(compare_args, o, e); };
    }
    MwuArgs mwu_args;
    {
        Command& c = add("mwu", "Two-sided Mann-Whitney U test");
        c.bind("a", mwu_args.a, "First sample");
        c.bind("b", mwu_args.b, "Second sample");
        c.bind("a-runs", mwu_args.a_runs, "Experiment arm directory for the first sample");
        c.bind("b-runs", mwu_args.b_runs, "Experiment arm directory for the second sample");
        c.bind("out", mwu_args.out, "JSON output (stdout when omitted)");
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_mwu(mwu_args, o, e); };
    }
    SynthArgs synth_args;
    {
        Command& c = add("synth", "Write a seeded synthetic corpus");
        c.bind("kind", synth_args.kind, "family (template families) or ratio (packed vs plain)");
        c.bind("out", synth_args.out, "Corpus directory");
        c.bind("per-label", synth_args.per_label, "Files per label (0 = generator default)");
        c.bind("seed", synth_args.seed, "Seed");
        c.handler = [&](std::ostream& o, std::ostream& e) { return do_synth(synth_args, o, e); };
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        diagnose(err, "error", "usage", e.what());
        return kExitUsage;
    }

    for (auto& cmd : commands) {
        if (!cmd->active()) continue;
        try {
            cmd->apply_config();
            return cmd->handler(out, err);
        } catch (const UsageError& e) {
            diagnose(err, "error", "usage", e.what());
            return kExitUsage;
        } catch (const std::exception& e) {
            diagnose(err, "error", "runtime", e.what());
            return kExitRuntime;
        }
    }
    diagnose(err, "error", "usage", "no subcommand given");
    return kExitUsage;
}

}  // namespace ncdforest::cli
