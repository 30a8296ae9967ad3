#include "ncdforest/distance.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "csv.hpp"
#include "ncdforest/error.hpp"
#include "ncdforest/parallel.hpp"

namespace fs = std::filesystem;

namespace ncdforest {

double ncd_from_sizes(std::uint64_t zx, std::uint64_t zy, std::uint64_t zxy) {
    const auto lo = static_cast<double>(std::min(zx, zy));
    const auto hi = static_cast<double>(std::max(zx, zy));
    if (hi == 0.0) throw InvalidArgument("ncd: compressed sizes must be positive");
    return (static_cast<double>(zxy) - lo) / hi;
}

double ncd(ByteView x, ByteView y, Compressor& compressor) {
    const std::uint64_t zx = compressor.compressed_size(x);
    const std::uint64_t zy = compressor.compressed_size(y);
    return ncd_from_sizes(zx, zy, compressor.compressed_size(concat(x, y)));
}

double ncd(const Sample& x, const Sample& y, Compressor& compressor) {
    const Sample& first = x.id <= y.id ? x : y;
    const Sample& second = x.id <= y.id ? y : x;
    const std::uint64_t limit = compressor.config().max_input_bytes();
    if (first.size_bytes + second.size_bytes > limit) {
        throw Error("pair (" + first.id + ", " + second.id + "): concatenation of " +
                    std::to_string(first.size_bytes + second.size_bytes) +
                    " bytes exceeds the limit of " + compressor.fingerprint() +
                    "; raise dictionary_bytes");
    }
    const std::uint64_t zx = compressor.compressed_size(first);
    const std::uint64_t zy = compressor.compressed_size(second);
    const Bytes joined = concat(read_file(first.path), read_file(second.path));
    return ncd_from_sizes(zx, zy, compressor.compressed_size(joined));
}

double ncd_lower_bound(std::uint64_t zx, std::uint64_t zy) {
    if (zx == 0 || zy == 0) throw InvalidArgument("ncd_lower_bound: sizes must be positive");
    return 1.0 - static_cast<double>(std::min(zx, zy)) / static_cast<double>(std::max(zx, zy));
}

DistanceMatrix::DistanceMatrix(std::vector<std::string> ids, std::string config_fingerprint,
                               std::optional<double> prune_threshold)
    : ids_(std::move(ids)),
      fingerprint_(std::move(config_fingerprint)),
      threshold_(prune_threshold),
      entries_(ids_.size() * (ids_.size() + 1) / 2) {}

std::size_t DistanceMatrix::slot(std::size_t i, std::size_t j, std::size_t n) {
    if (i > j) std::swap(i, j);
    // Rows before i hold n + (n-1) + ... + (n-i+1) entries.
    return i * n - i * (i - 1) / 2 + (j - i);
}

const MatrixEntry& DistanceMatrix::at(std::size_t i, std::size_t j) const {
    if (i >= size() || j >= size()) throw InvalidArgument("DistanceMatrix::at: index out of range");
    return entries_[slot(i, j, size())];
}

MatrixEntry& DistanceMatrix::at(std::size_t i, std::size_t j) {
    if (i >= size() || j >= size()) throw InvalidArgument("DistanceMatrix::at: index out of range");
    return entries_[slot(i, j, size())];
}

std::size_t DistanceMatrix::count(EntryStatus status) const {
    return static_cast<std::size_t>(std::count_if(
        entries_.begin(), entries_.end(), [status](const MatrixEntry& e) { return e.status == status; }));
}

namespace {

std::vector<std::uint64_t> single_sizes(const std::vector<Sample>& samples, Compressor& compressor,
                                        unsigned threads) {
    std::vector<std::uint64_t> z(samples.size());
    parallel_for(samples.size(), threads,
                 [&](std::size_t i) { z[i] = compressor.compressed_size(samples[i]); });
    return z;
}

std::vector<std::pair<std::size_t, std::size_t>> pairs_of(std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * (n + 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) pairs.emplace_back(i, j);
    return pairs;
}

}  // namespace

DistanceMatrix pairwise_matrix(const CorpusSet& samples, Compressor& compressor,
                               const MatrixOptions& options) {
    const auto& items = samples.samples();
    const std::size_t n = items.size();
    std::vector<std::string> ids;
    for (const Sample& s : items) ids.push_back(s.id);

    DistanceMatrix matrix(ids, compressor.fingerprint(), options.prune_threshold);
    if (options.checkpoint && fs::exists(*options.checkpoint)) {
        DistanceMatrix previous = read_matrix(*options.checkpoint);
        if (previous.ids() != matrix.ids() ||
            previous.config_fingerprint() != matrix.config_fingerprint() ||
            previous.prune_threshold() != matrix.prune_threshold())
            throw Error("checkpoint " + options.checkpoint->string() +
                        " was written for a different corpus, compressor or threshold");
        matrix = std::move(previous);
    }

    const std::vector<std::uint64_t> z = single_sizes(items, compressor, options.threads);
    std::vector<Bytes> content(n);
    parallel_for(n, options.threads, [&](std::size_t i) { content[i] = read_file(items[i].path); });
    const std::uint64_t limit = compressor.config().max_input_bytes();

    std::vector<std::pair<std::size_t, std::size_t>> todo;
    for (const auto& [i, j] : pairs_of(n))
        if (matrix.at(i, j).status == EntryStatus::Pending) todo.emplace_back(i, j);

    const auto compute = [&](std::size_t k) {
        const auto [i, j] = todo[k];
        MatrixEntry& entry = matrix.at(i, j);
        const double bound = ncd_lower_bound(z[i], z[j]);
        if (options.prune_threshold && bound >= *options.prune_threshold) {
            entry = {EntryStatus::Pruned, bound};
            return;
        }
        if (content[i].size() + content[j].size() > limit)
            throw Error("pair (" + ids[i] + ", " + ids[j] + "): concatenation of " +
                        std::to_string(content[i].size() + content[j].size()) +
                        " bytes exceeds the limit of " + compressor.fingerprint() +
                        "; raise dictionary_bytes");
        // ids are sorted, so i <= j is already the canonical order.
        const std::uint64_t zxy = compressor.compressed_size(concat(content[i], content[j]));
        entry = {EntryStatus::Exact, ncd_from_sizes(z[i], z[j], zxy)};
    };

    constexpr std::size_t kChunk = 4096;
    for (std::size_t begin = 0; begin < todo.size(); begin += kChunk) {
        const std::size_t len = std::min(kChunk, todo.size() - begin);
        try {
            parallel_for(len, options.threads, [&](std::size_t k) { compute(begin + k); });
        } catch (...) {
            if (options.checkpoint) write_matrix(matrix, *options.checkpoint);
            throw;
        }
        if (options.checkpoint) write_matrix(matrix, *options.checkpoint);
    }
    return matrix;
}

std::vector<SavingsPoint> savings_curve(const CorpusSet& samples, Compressor& compressor,
                                        const std::vector<double>& thresholds, unsigned threads) {
    for (const double t : thresholds)
        if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("savings_curve: thresholds must lie in [0, 1]");
    const std::vector<std::uint64_t> z = single_sizes(samples.samples(), compressor, threads);
    const std::size_t n = z.size();

    std::vector<double> bounds;
    bounds.reserve(n * (n + 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) bounds.push_back(ncd_lower_bound(z[i], z[j]));
    std::sort(bounds.begin(), bounds.end());

    std::vector<SavingsPoint> curve;
    for (const double t : thresholds) {
        SavingsPoint p;
        p.threshold = t;
        p.total = bounds.size();
        p.skipped = static_cast<std::uint64_t>(bounds.end() - std::lower_bound(bounds.begin(), bounds.end(), t));
        p.fraction_skipped = p.total == 0 ? 0.0 : static_cast<double>(p.skipped) / static_cast<double>(p.total);
        curve.push_back(p);
    }
    return curve;
}

std::vector<BoundViolation> audit_lower_bound(const DistanceMatrix& matrix, const CorpusSet& samples,
                                              Compressor& compressor, double tolerance) {
    const std::size_t n = matrix.size();
    std::vector<std::uint64_t> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = compressor.compressed_size(samples.at(matrix.ids()[i]));

    std::vector<BoundViolation> violations;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const MatrixEntry& e = matrix.at(i, j);
            if (e.status != EntryStatus::Exact) continue;
            const double bound = ncd_lower_bound(z[i], z[j]);
            if (bound > e.value + tolerance)
                violations.push_back({matrix.ids()[i], matrix.ids()[j], bound, e.value});
        }
    return violations;
}

namespace {

constexpr char kMagic[4] = {'N', 'C', 'D', 'M'};
constexpr std::uint32_t kMatrixVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t b = 0; b < sizeof(T); ++b)
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * b)) & 0xff));
}

void put_string(std::string& out, const std::string& s) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

class Reader {
public:
    Reader(std::string data, std::string name) : data_(std::move(data)), name_(std::move(name)) {}

    template <typename T>
    T le() {
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t b = 0; b < sizeof(T); ++b)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    std::string str() {
        const auto len = le<std::uint32_t>();
        need(len);
        std::string s = data_.substr(pos_, len);
        pos_ += len;
        return s;
    }

    std::string raw(std::size_t len) {
        need(len);
        std::string s = data_.substr(pos_, len);
        pos_ += len;
        return s;
    }

    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t len) const {
        if (data_.size() - pos_ < len) throw Error("matrix file " + name_ + " is truncated");
    }

    std::string data_;
    std::string name_;
    std::size_t pos_ = 0;
};

std::string format_double(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

}  // namespace

void write_matrix(const DistanceMatrix& matrix, const fs::path& path) {
    std::string out(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kMatrixVersion);
    put_le<std::uint64_t>(out, matrix.size());
    for (const auto& id : matrix.ids()) put_string(out, id);
    put_string(out, matrix.config_fingerprint());
    put_le<std::uint8_t>(out, matrix.prune_threshold() ? 1 : 0);
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(matrix.prune_threshold().value_or(0.0)));
    for (const MatrixEntry& e : matrix.entries()) {
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.status));
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(e.value));
    }
    // Write-then-rename so a crash never leaves a torn checkpoint.
    const fs::path tmp = path.string() + ".tmp";
    write_text(tmp, out);
    fs::rename(tmp, path);
}

DistanceMatrix read_matrix(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open matrix file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    Reader r(buf.str(), path.string());
    if (r.raw(4) != std::string(kMagic, 4)) throw Error(path.string() + " is not a matrix file");
    const auto version = r.le<std::uint32_t>();
    if (version != kMatrixVersion)
        throw Error(path.string() + ": unsupported matrix version " + std::to_string(version));
    const auto n = r.le<std::uint64_t>();
    std::vector<std::string> ids;
    for (std::uint64_t i = 0; i < n; ++i) ids.push_back(r.str());
    std::string fingerprint = r.str();
    const bool has_threshold = r.le<std::uint8_t>() != 0;
    const double threshold = std::bit_cast<double>(r.le<std::uint64_t>());
    DistanceMatrix matrix(std::move(ids), std::move(fingerprint),
                          has_threshold ? std::optional<double>(threshold) : std::nullopt);
    for (MatrixEntry& e : matrix.entries()) {
        const auto tag = r.le<std::uint8_t>();
        if (tag > 2) throw Error(path.string() + ": bad entry tag " + std::to_string(tag));
        e.status = static_cast<EntryStatus>(tag);
        e.value = std::bit_cast<double>(r.le<std::uint64_t>());
    }
    if (!r.done()) throw Error(path.string() + ": trailing bytes after matrix entries");
    return matrix;
}

void write_matrix_csv(const DistanceMatrix& matrix, const fs::path& path) {
    static constexpr const char* kStatus[] = {"exact", "pruned", "pending"};
    std::ostringstream out;
    out << "id_a,id_b,status,value\n";
    const std::size_t n = matrix.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const MatrixEntry& e = matrix.at(i, j);
            out << csv::escape(matrix.ids()[i]) << ',' << csv::escape(matrix.ids()[j]) << ','
                << kStatus[static_cast<int>(e.status)] << ',' << format_double(e.value) << '\n';
        }
    write_text(path, out.str());
}

void write_savings_csv(const std::vector<SavingsPoint>& curve, const fs::path& path) {
    std::ostringstream out;
    out << "threshold,skipped,total,fraction_skipped\n";
    for (const auto& p : curve)
        out << format_double(p.threshold) << ',' << p.skipped << ',' << p.total << ','
            << format_double(p.fraction_skipped) << '\n';
    write_text(path, out.str());
}

}  // namespace ncdforest
