#pragma once
// On-disk formats. All integers and floats are little-endian; floats are IEEE-754 binary32.
//
// Feature file:
//   "IKRLFEAT" | u32 version=1 | u32 d_i | u64 entity_count
//   entity_count x { u64 entity | u32 image_count | image_count*d_i f32 }   (ascending entity)
//
// Checkpoint:
//   "IKRLMODL" | u32 version=1 | u32 d_s | u32 d_i | u64 |E| | u64 |R|
//   |E|*d_s f32 entity rows | |R|*d_s f32 relation rows | d_s*d_i f32 projection rows

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <unistd.h>

#include "config.hpp"
#include "errors.hpp"
#include "model.hpp"

namespace ikrl {

inline constexpr std::string_view kFeatureMagic = "IKRLFEAT";
inline constexpr std::string_view kCheckpointMagic = "IKRLMODL";
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 24;
inline constexpr std::size_t kCheckpointHeaderBytes = 36;

namespace detail {

class ByteWriter {
public:
    void raw(std::string_view s) { buf_.append(s); }

    template <typename T>
    void le(T value) {
        static_assert(std::is_integral_v<T>);
        for (std::size_t i = 0; i < sizeof(T); ++i)
            buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
    }

    void f32(double value) { le(std::bit_cast<std::uint32_t>(static_cast<float>(value))); }

    const std::string& bytes() const noexcept { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

    std::string_view raw(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    template <typename T>
    T le() {
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= std::uint64_t{static_cast<unsigned char>(data_[pos_ + i])} << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    double f32() { return static_cast<double>(std::bit_cast<float>(le<std::uint32_t>())); }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (remaining() < n)
            throw FormatError(source_ + ": truncated file (needed " + std::to_string(n) +
                              " bytes at offset " + std::to_string(pos_) + ")");
    }

    std::string_view data_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

// Writes via a temporary sibling file and rename, so readers never see partial output.
inline void write_file_atomic(const std::string& path, std::string_view bytes) {
    const std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline std::string encode_features(const FeatureStore& store) {
    std::uint64_t records = 0;
    for (std::size_t e = 0; e < store.num_entities(); ++e) records += store.has(e);
    detail::ByteWriter w;
    w.raw(kFeatureMagic);
    w.le<std::uint32_t>(kFormatVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(store.image_dim()));
    w.le<std::uint64_t>(records);
    for (std::size_t e = 0; e < store.num_entities(); ++e) {
        if (!store.has(e)) continue;
        const auto& imgs = store.images(e);
        w.le<std::uint64_t>(e);
        w.le<std::uint32_t>(static_cast<std::uint32_t>(imgs.size()));
        for (const auto& f : imgs)
            for (double x : f) w.f32(x);
    }
    return w.bytes();
}

// expected_image_dim == 0 accepts any dimension.
inline FeatureStore decode_features(std::string_view bytes, std::size_t expected_image_dim = 0,
                                    const std::string& source = "<features>") {
    detail::ByteReader r(bytes, source);
    if (r.raw(8) != kFeatureMagic) throw FormatError(source + ": bad magic, not an IKRLFEAT file");
    if (const auto v = r.le<std::uint32_t>(); v != kFormatVersion)
        throw FormatError(source + ": unsupported feature file version " + std::to_string(v));
    const std::size_t image_dim = r.le<std::uint32_t>();
    if (expected_image_dim != 0 && image_dim != expected_image_dim)
        throw FormatError(source + ": feature dimension " + std::to_string(image_dim) +
                          " does not match configured " + std::to_string(expected_image_dim));
    const std::uint64_t records = r.le<std::uint64_t>();
    FeatureStore store(0, image_dim);
    for (std::uint64_t k = 0; k < records; ++k) {
        const std::uint64_t entity = r.le<std::uint64_t>();
        const std::uint32_t count = r.le<std::uint32_t>();
        if (count == 0) throw FormatError(source + ": entity " + std::to_string(entity) + " has zero images");
        if (store.has(entity))
            throw FormatError(source + ": duplicate record for entity " + std::to_string(entity));
        // Bound the allocation by what the file can actually hold.
        if (r.remaining() / 4 / image_dim < count)
            throw FormatError(source + ": truncated file in record for entity " + std::to_string(entity));
        std::vector<Vec> imgs(count, Vec(image_dim));
        for (auto& f : imgs)
            for (double& x : f) x = r.f32();
        store.set_images(entity, std::move(imgs));
    }
    if (r.remaining() != 0)
        throw FormatError(source + ": " + std::to_string(r.remaining()) + " trailing bytes");
    return store;
}

inline void write_features(const std::string& path, const FeatureStore& store) {
    write_file_atomic(path, encode_features(store));
}

inline FeatureStore read_features(const std::string& path, std::size_t expected_image_dim = 0) {
    return decode_features(detail::read_file(path), expected_image_dim, path);
}

inline std::string encode_checkpoint(const ModelParams& p) {
    detail::ByteWriter w;
    w.raw(kCheckpointMagic);
    w.le<std::uint32_t>(kFormatVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(p.dim()));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(p.image_dim()));
    w.le<std::uint64_t>(p.num_entities());
    w.le<std::uint64_t>(p.num_relations());
    for (const Matrix* m : {&p.entities, &p.relations, &p.projection})
        for (double x : m->flat()) w.f32(x);
    return w.bytes();
}

inline ModelParams decode_checkpoint(std::string_view bytes, const std::string& source = "<checkpoint>") {
    detail::ByteReader r(bytes, source);
    if (r.raw(8) != kCheckpointMagic) throw FormatError(source + ": bad magic, not an IKRLMODL file");
    if (const auto v = r.le<std::uint32_t>(); v != kFormatVersion)
        throw FormatError(source + ": unsupported checkpoint version " + std::to_string(v));
    const std::size_t dim = r.le<std::uint32_t>();
    const std::size_t image_dim = r.le<std::uint32_t>();
    const std::uint64_t ne = r.le<std::uint64_t>();
    const std::uint64_t nr = r.le<std::uint64_t>();
    const std::uint64_t floats = (ne + nr) * dim + dim * image_dim;
    if (r.remaining() != floats * 4)
        throw FormatError(source + ": payload is " + std::to_string(r.remaining()) +
                          " bytes, header implies " + std::to_string(floats * 4));
    ModelParams p(ne, nr, dim, image_dim);
    for (Matrix* m : {&p.entities, &p.relations, &p.projection})
        for (double& x : m->flat()) x = r.f32();
    return p;
}

inline void save_checkpoint(const std::string& path, const ModelParams& p) {
    write_file_atomic(path, encode_checkpoint(p));
}

inline ModelParams load_checkpoint(const std::string& path) {
    return decode_checkpoint(detail::read_file(path), path);
}

// Loads and checks that the shapes agree with the dataset and configuration.
inline ModelParams load_checkpoint(const std::string& path, std::size_t num_entities,
                                   std::size_t num_relations, std::size_t dim) {
    ModelParams p = load_checkpoint(path);
    if (p.num_entities() != num_entities || p.num_relations() != num_relations || p.dim() != dim)
        throw FormatError(path + ": checkpoint shape (" + std::to_string(p.num_entities()) + " entities, " +
                          std::to_string(p.num_relations()) + " relations, dim " + std::to_string(p.dim()) +
                          ") does not match (" + std::to_string(num_entities) + ", " +
                          std::to_string(num_relations) + ", " + std::to_string(dim) + ")");
    return p;
}

namespace detail {

template <typename T>
T parse_number(std::string_view s, const std::string& source, std::size_t line, const std::string& key) {
    T value{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError(source, line, "invalid value '" + std::string(s) + "' for " + key);
    return value;
}

}  // namespace detail

inline Aggregation parse_aggregation(std::string_view s) {
    if (s == "att") return Aggregation::Att;
    if (s == "avg") return Aggregation::Avg;
    if (s == "max") return Aggregation::Max;
    throw std::invalid_argument("unknown aggregation '" + std::string(s) + "' (att|avg|max)");
}

inline Norm parse_norm(std::string_view s) {
    if (s == "l1") return Norm::L1;
    if (s == "l2") return Norm::L2;
    throw std::invalid_argument("unknown norm '" + std::string(s) + "' (l1|l2)");
}

// "key = value" lines, '#' starts a comment. Unknown keys are errors.
inline TrainConfig parse_config(std::istream& in, TrainConfig cfg = {},
                                const std::string& source = "<config>") {
    std::string text;
    std::size_t lineno = 0;
    while (std::getline(in, text)) {
        ++lineno;
        std::string_view line = text;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError(source, lineno, "expected 'key = value'");
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string_view value = detail::trim(line.substr(eq + 1));
        if (value.empty()) throw ParseError(source, lineno, "missing value for " + key);

        auto num = [&]<typename T>(T& field) { field = detail::parse_number<T>(value, source, lineno, key); };
        auto flag = [&](bool& field) {
            if (value == "true" || value == "1") field = true;
            else if (value == "false" || value == "0") field = false;
            else throw ParseError(source, lineno, "expected true/false for " + key);
        };
        try {
            if (key == "margin") num(cfg.margin);
            else if (key == "lr_start") num(cfg.lr_start);
            else if (key == "lr_end") num(cfg.lr_end);
            else if (key == "epochs") num(cfg.epochs);
            else if (key == "batch_size") num(cfg.batch_size);
            else if (key == "dim") num(cfg.dim);
            else if (key == "image_dim") num(cfg.image_dim);
            else if (key == "max_images") num(cfg.max_images);
            else if (key == "seed") num(cfg.seed);
            else if (key == "threads") num(cfg.threads);
            else if (key == "aggregation") cfg.aggregation = parse_aggregation(value);
            else if (key == "norm") cfg.norm = parse_norm(value);
            else if (key == "attention_detached") flag(cfg.attention_detached);
            else if (key == "model") {
                if (value == "ikrl") cfg.model = EnergyModel::Ikrl;
                else if (value == "transe") cfg.model = EnergyModel::TransE;
                else throw ParseError(source, lineno, "model must be ikrl or transe");
            } else if (key == "init") {
                if (value == "random") cfg.init = InitMode::Random;
                else if (value == "pretrained") cfg.init = InitMode::Pretrained;
                else throw ParseError(source, lineno, "init must be random or pretrained");
            } else if (key == "pretrained_checkpoint") cfg.pretrained_checkpoint = std::string(value);
            else throw ParseError(source, lineno, "unknown key '" + key + "'");
        } catch (const std::invalid_argument& e) {
            throw ParseError(source, lineno, e.what());
        }
    }
    cfg.validate();
    return cfg;
}

inline TrainConfig load_config(const std::string& path, TrainConfig defaults = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    return parse_config(in, std::move(defaults), path);
}

}  // namespace ikrl
