#include "ncdforest/compressor.hpp"

#include <lzma.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "ncdforest/distance.hpp"
#include "ncdforest/error.hpp"
#include "ncdforest/rng.hpp"
#include "ncdforest/synth.hpp"

#ifdef NCDFOREST_HAVE_BZ2
// libbz2 ships without its header on this platform; the buffer API has been
// stable since bzip2 1.0.
extern "C" int BZ2_bzBuffToBuffCompress(char* dest, unsigned int* dest_len, char* source,
                                        unsigned int source_len, int block_size_100k,
                                        int verbosity, int work_factor);
#endif

namespace ncdforest {
namespace {

constexpr std::uint64_t kMinLzmaDictionary = 4096;
constexpr std::uint64_t kMaxLzmaDictionary = 1536ull << 20;  // liblzma encoder limit
constexpr std::uint64_t kMax32 = std::numeric_limits<unsigned int>::max();
constexpr std::string_view kCacheHeader = "ncdforest-zcache 1";

std::uint64_t lzma_size(ByteView data, const CompressorConfig& cfg) {
    lzma_options_lzma options{};
    if (lzma_lzma_preset(&options, static_cast<std::uint32_t>(cfg.level)) != 0)
        throw Error("lzma: unsupported preset " + std::to_string(cfg.level));
    const std::uint64_t wanted = std::max<std::uint64_t>(kMinLzmaDictionary, std::bit_ceil(std::max<std::uint64_t>(data.size(), 1)));
    options.dict_size = static_cast<std::uint32_t>(std::min(wanted, cfg.dictionary_bytes));

    const lzma_filter filters[] = {{LZMA_FILTER_LZMA2, &options},
                                   {LZMA_VLI_UNKNOWN, nullptr}};
    // Headroom for chunk headers on incompressible input.
    Bytes out(data.size() + data.size() / 8 + 1024);
    std::size_t out_pos = 0;
    const lzma_ret ret = lzma_raw_buffer_encode(filters, nullptr, data.data(), data.size(),
                                                out.data(), &out_pos, out.size());
    if (ret != LZMA_OK) throw Error("lzma: encoder failed with code " + std::to_string(ret));
    return out_pos;
}

int deflate_window_bits(std::uint64_t dictionary_bytes) {
    int bits = 9;
    while (bits < 15 && (std::uint64_t{1} << (bits + 1)) <= dictionary_bytes) ++bits;
    return bits;
}

std::uint64_t deflate_size(ByteView data, const CompressorConfig& cfg) {
    z_stream zs{};
    // Negative window bits: raw deflate stream without zlib header/trailer.
    if (deflateInit2(&zs, cfg.level, Z_DEFLATED, -deflate_window_bits(cfg.dictionary_bytes), 8,
                     Z_DEFAULT_STRATEGY) != Z_OK)
        throw Error("deflate: init failed");
    Bytes out(deflateBound(&zs, static_cast<uLong>(data.size())));
    zs.next_in = const_cast<Bytef*>(data.data());
    zs.avail_in = static_cast<uInt>(data.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int ret = deflate(&zs, Z_FINISH);
    const std::uint64_t size = zs.total_out;
    deflateEnd(&zs);
    if (ret != Z_STREAM_END) throw Error("deflate: stream did not finish");
    return size;
}

std::uint64_t bwt_size(ByteView data, const CompressorConfig& cfg) {
#ifdef NCDFOREST_HAVE_BZ2
    auto out_len = static_cast<unsigned int>(data.size() + data.size() / 100 + 600);
    Bytes out(out_len);
    const int ret = BZ2_bzBuffToBuffCompress(
        reinterpret_cast<char*>(out.data()), &out_len,
        const_cast<char*>(data.empty() ? "" : reinterpret_cast<const char*>(data.data())),
        static_cast<unsigned int>(data.size()), cfg.level, 0, 0);
    if (ret != 0) throw Error("bzip2: compression failed with code " + std::to_string(ret));
    return out_len;
#else
    (void)data;
    (void)cfg;
    throw Error("bwt backend unavailable: built without libbz2");
#endif
}

}  // namespace

std::string_view backend_name(Backend backend) {
    switch (backend) {
        case Backend::Lzma: return "lzma";
        case Backend::Deflate: return "deflate";
        case Backend::Bwt: return "bwt";
    }
    return "unknown";
}

Backend parse_backend(std::string_view text) {
    if (text == "lzma") return Backend::Lzma;
    if (text == "deflate") return Backend::Deflate;
    if (text == "bwt") return Backend::Bwt;
    throw InvalidArgument("unknown backend '" + std::string(text) + "' (expected lzma, deflate or bwt)");
}

std::string CompressorConfig::fingerprint() const {
    std::ostringstream out;
    out << backend_name(backend) << ":l" << level << ":d" << dictionary_bytes;
    return out.str();
}

void CompressorConfig::validate() const {
    switch (backend) {
        case Backend::Lzma:
            if (level < 0 || level > 9) throw InvalidArgument("lzma level must be in 0..9");
            if (dictionary_bytes < kMinLzmaDictionary || dictionary_bytes > kMaxLzmaDictionary)
                throw InvalidArgument("lzma dictionary_bytes must be in 4 KiB..1.5 GiB");
            break;
        case Backend::Deflate:
            if (level < 0 || level > 9) throw InvalidArgument("deflate level must be in 0..9");
            if (dictionary_bytes == 0) throw InvalidArgument("dictionary_bytes must be positive");
            break;
        case Backend::Bwt:
            if (level < 1 || level > 9) throw InvalidArgument("bwt level (block size) must be in 1..9");
            if (dictionary_bytes == 0) throw InvalidArgument("dictionary_bytes must be positive");
            break;
    }
}

std::uint64_t CompressorConfig::max_input_bytes() const {
    return backend == Backend::Lzma ? dictionary_bytes : kMax32;
}

std::uint64_t compress_uncached(ByteView data, const CompressorConfig& cfg) {
    if (data.size() > cfg.max_input_bytes()) {
        std::ostringstream msg;
        msg << "input of " << data.size() << " bytes exceeds the " << cfg.max_input_bytes()
            << "-byte limit of " << cfg.fingerprint();
        if (cfg.backend == Backend::Lzma) msg << "; raise dictionary_bytes";
        throw Error(msg.str());
    }
    switch (cfg.backend) {
        case Backend::Lzma: return lzma_size(data, cfg);
        case Backend::Deflate: return deflate_size(data, cfg);
        case Backend::Bwt: return bwt_size(data, cfg);
    }
    throw Error("unknown backend");
}

SizeCache::SizeCache(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    std::string line;
    if (!std::getline(in, line)) return;
    if (line != kCacheHeader)
        throw Error("cache " + path_.string() + ": unsupported header '" + line + "'");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto space = line.rfind(' ');
        if (space == std::string::npos)
            throw Error("cache " + path_.string() + " line " + std::to_string(lineno) + ": malformed");
        std::uint64_t value = 0;
        try {
            value = std::stoull(line.substr(space + 1));
        } catch (const std::exception&) {
            throw Error("cache " + path_.string() + " line " + std::to_string(lineno) + ": bad size");
        }
        entries_[line.substr(0, space)] = value;
    }
}

SizeCache::~SizeCache() {
    try {
        flush();
    } catch (...) {
    }
}

std::optional<std::uint64_t> SizeCache::lookup(const std::string& key) const {
    std::shared_lock lock(mutex_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void SizeCache::store(const std::string& key, std::uint64_t z_size) {
    std::unique_lock lock(mutex_);
    const auto [it, inserted] = entries_.insert_or_assign(key, z_size);
    if (inserted && !path_.empty()) pending_.push_back(key);
}

void SizeCache::flush() {
    std::unique_lock lock(mutex_);
    if (path_.empty() || pending_.empty()) return;
    const bool fresh = !std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error("cannot write cache " + path_.string());
    if (fresh) out << kCacheHeader << '\n';
    for (const auto& key : pending_) out << key << ' ' << entries_.at(key) << '\n';
    pending_.clear();
}

std::size_t SizeCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

Compressor::Compressor(CompressorConfig cfg, std::shared_ptr<SizeCache> cache)
    : cfg_(cfg), fingerprint_(cfg.fingerprint()), cache_(std::move(cache)) {
    cfg_.validate();
    if (!cache_) cache_ = std::make_shared<SizeCache>();
}

std::uint64_t Compressor::lookup_or_compute(const std::string& digest, ByteView data,
                                            const std::filesystem::path* source) {
    const std::string key = digest + "/" + fingerprint_;
    if (const auto hit = cache_->lookup(key)) {
        ++hits_;
        return *hit;
    }
    ++misses_;
    std::uint64_t z = 0;
    if (source != nullptr) {
        const Bytes content = read_file(*source);
        z = compress_uncached(content, cfg_);
    } else {
        z = compress_uncached(data, cfg_);
    }
    cache_->store(key, z);
    return z;
}

std::uint64_t Compressor::compressed_size(ByteView data) {
    if (data.size() > cfg_.max_input_bytes()) compress_uncached(data, cfg_);  // throws
    return lookup_or_compute(sha256_hex(data), data, nullptr);
}

std::uint64_t Compressor::compressed_size(const Sample& sample) {
    if (sample.digest.empty()) return compressed_size(read_file(sample.path));
    return lookup_or_compute(sample.digest, {}, &sample.path);
}

CompressionRecord Compressor::record(const Sample& sample) {
    return {sample.id, fingerprint_, compressed_size(sample), sample.size_bytes};
}

double compressibility_ratio(const Sample& sample, Compressor& compressor) {
    if (sample.size_bytes == 0)
        throw InvalidArgument("compressibility ratio undefined for empty sample '" + sample.id + "'");
    return static_cast<double>(compressor.compressed_size(sample)) /
           static_cast<double>(sample.size_bytes);
}

double compressibility_ratio(ByteView data, Compressor& compressor) {
    if (data.empty()) throw InvalidArgument("compressibility ratio undefined for empty input");
    return static_cast<double>(compressor.compressed_size(data)) / static_cast<double>(data.size());
}

NormalityReport normality_report(Compressor& compressor, const std::vector<Bytes>& suite) {
    if (suite.empty()) throw InvalidArgument("normality_report: suite must not be empty");
    const std::size_t m = suite.size();
    NormalityReport report;
    report.config_fingerprint = compressor.fingerprint();
    report.empty_input_bytes = compressor.compressed_size(ByteView{});

    std::vector<double> single(m);
    for (std::size_t i = 0; i < m; ++i) single[i] = static_cast<double>(compressor.compressed_size(suite[i]));
    std::vector<double> pair(m * m);  // pair[i*m+j] = Z(x_i x_j)
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            pair[i * m + j] = static_cast<double>(compressor.compressed_size(concat(suite[i], suite[j])));
    const auto z2 = [&](std::size_t i, std::size_t j) { return pair[i * m + j]; };

    report.idempotency.axiom = "idempotency";
    report.monotonicity.axiom = "monotonicity";
    report.symmetry.axiom = "symmetry";
    report.distributivity.axiom = "distributivity";
    const auto consider = [](AxiomDeviation& axiom, double value, std::vector<std::size_t> witness) {
        if (axiom.witness.empty() || value > axiom.max_deviation_bytes) {
            axiom.max_deviation_bytes = value;
            axiom.witness = std::move(witness);
        }
    };

    for (std::size_t i = 0; i < m; ++i) consider(report.idempotency, z2(i, i) - single[i], {i});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            consider(report.monotonicity, std::max(0.0, single[i] - z2(i, j)), {i, j});
            if (i < j) consider(report.symmetry, std::abs(z2(i, j) - z2(j, i)), {i, j});
            for (std::size_t k = 0; k < m; ++k) {
                if (k == i || k == j) continue;
                consider(report.distributivity,
                         std::max(0.0, z2(i, j) + single[k] - z2(i, k) - z2(j, k)), {i, j, k});
            }
        }
    return report;
}

std::string normality_report_json(const NormalityReport& report) {
    nlohmann::ordered_json j;
    j["config"] = report.config_fingerprint;
    j["empty_input_bytes"] = report.empty_input_bytes;
    for (const AxiomDeviation* axiom : {&report.idempotency, &report.monotonicity,
                                        &report.symmetry, &report.distributivity}) {
        j["axioms"][axiom->axiom] = {{"max_deviation_bytes", axiom->max_deviation_bytes},
                                     {"witness_tuple_ids", axiom->witness}};
    }
    return j.dump(2) + "\n";
}

std::vector<SelfDistancePoint> self_distance_curve(const std::vector<std::uint64_t>& sizes,
                                                   Compressor& compressor, std::uint64_t seed) {
    std::vector<SelfDistancePoint> curve;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        SelfDistancePoint point;
        point.size = sizes[i];
        if (sizes[i] == 0) throw InvalidArgument("self_distance_curve: sizes must be positive");
        try {
            if (2 * sizes[i] > compressor.config().max_input_bytes())
                throw Error("x concatenated with itself (" + std::to_string(2 * sizes[i]) +
                            " bytes) exceeds the limit of " + compressor.fingerprint());
            Rng rng(derive_seed(seed, i));
            const Bytes x = synth::mixed_content(static_cast<std::size_t>(sizes[i]), rng);
            point.ncd = ncd(x, x, compressor);
        } catch (const Error& e) {
            point.error = e.what();
        }
        curve.push_back(std::move(point));
    }
    return curve;
}

}  // namespace ncdforest
