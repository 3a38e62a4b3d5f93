#pragma once

// Binary checkpoint, all integers little-endian:
//
//   "AECN" | u32 version (1) | u32 length + UTF-8 JSON {"model": ..., "training": ...}
//   | u32 parameter count | per parameter: u16 name length, name, u8 rank,
//   rank x u32 dims, raw float32 payload | u32 CRC-32 of all preceding bytes

#include <aecn/error.hpp>
#include <aecn/image.hpp>
#include <aecn/model.hpp>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace aecn {

inline constexpr char checkpoint_magic[4] = {'A', 'E', 'C', 'N'};
inline constexpr std::uint32_t checkpoint_version = 1;

struct TrainingMetadata {
    std::size_t epochs = 0;
    double final_loss = 0.0;
    std::uint64_t seed = 0;

    friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

struct Checkpoint {
    AutoencoderModel model;
    TrainingMetadata training;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for very large buffers.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = ::crc32(crc, bytes.data() + off, n);
        off += n;
    }
    return static_cast<std::uint32_t>(crc);
}

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int k = 0; k < 2; ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
    }
    void u32(std::uint32_t v) {
        for (int k = 0; k < 4; ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
    }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    std::vector<std::uint8_t>& buffer() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}

    std::size_t offset() const { return pos_; }

    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) {
            throw LengthMismatchError("checkpoint truncated: expected at least " + std::to_string(pos_ + n) +
                                      " bytes, got " + std::to_string(b_.size()));
        }
    }
    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int k = 0; k < 2; ++k) v |= static_cast<std::uint16_t>(b_[pos_++]) << (8 * k);
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * k);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    float f32() { return std::bit_cast<float>(u32()); }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

inline nlohmann::json checkpoint_header_json(const ModelConfig& cfg, const TrainingMetadata& meta) {
    return {{"model", to_json(cfg)},
            {"training", {{"epochs", meta.epochs}, {"final_loss", meta.final_loss}, {"seed", meta.seed}}}};
}

} // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const AutoencoderModel& model, const TrainingMetadata& meta = {}) {
    detail::ByteWriter w;
    w.bytes(checkpoint_magic, 4);
    w.u32(checkpoint_version);
    const std::string js = detail::checkpoint_header_json(model.config(), meta).dump();
    w.u32(static_cast<std::uint32_t>(js.size()));
    w.bytes(js.data(), js.size());
    const auto& params = model.parameters();
    const auto& names = model.parameter_names();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (std::size_t k = 0; k < params.size(); ++k) {
        w.u16(static_cast<std::uint16_t>(names[k].size()));
        w.bytes(names[k].data(), names[k].size());
        w.u8(static_cast<std::uint8_t>(params[k].rank()));
        for (std::size_t d : params[k].dims()) w.u32(static_cast<std::uint32_t>(d));
        for (float v : params[k].values()) w.u32(std::bit_cast<std::uint32_t>(v));
    }
    const std::uint32_t crc = crc32_of(w.buffer());
    w.u32(crc);
    return std::move(w.buffer());
}

/// Decodes a checkpoint. Errors: BadMagicError, UnsupportedVersionError,
/// LengthMismatchError (file shorter than its declared content),
/// TrailingBytesError (longer), ChecksumError, ParseError (inconsistent content).
inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), checkpoint_magic, 4) != 0) {
        throw BadMagicError("checkpoint: bad magic (expected \"AECN\")");
    }
    detail::ByteReader r(bytes);
    r.str(4);
    const std::uint32_t version = r.u32();
    if (version != checkpoint_version) {
        throw UnsupportedVersionError("checkpoint: unsupported format version " + std::to_string(version));
    }
    const std::uint32_t js_len = r.u32();
    const std::string js = r.str(js_len);

    nlohmann::json header;
    ModelConfig cfg;
    TrainingMetadata meta;
    try {
        header = nlohmann::json::parse(js);
        cfg = model_config_from_json(header.at("model"));
        const auto& t = header.at("training");
        meta.epochs = t.at("epochs").get<std::size_t>();
        meta.final_loss = t.at("final_loss").get<double>();
        meta.seed = t.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: malformed header JSON: ") + e.what());
    } catch (const ConfigError& e) {
        throw ParseError(std::string("checkpoint: invalid model config: ") + e.what());
    }

    AutoencoderModel model(cfg);
    // The config fixes every parameter name and shape, hence the exact file size.
    std::size_t expected = r.offset() + 4 + 4;
    for (std::size_t k = 0; k < model.parameters().size(); ++k) {
        expected += 2 + model.parameter_names()[k].size() + 1 + 4 * model.parameters()[k].rank() +
                    4 * model.parameters()[k].size();
    }
    if (bytes.size() < expected) {
        throw LengthMismatchError("checkpoint truncated: expected " + std::to_string(expected) + " bytes, got " +
                                  std::to_string(bytes.size()));
    }
    if (bytes.size() > expected) {
        throw TrailingBytesError("checkpoint: " + std::to_string(bytes.size() - expected) +
                                 " trailing bytes after expected " + std::to_string(expected));
    }
    const std::uint32_t stored_crc = static_cast<std::uint32_t>(bytes[expected - 4]) |
                                     static_cast<std::uint32_t>(bytes[expected - 3]) << 8 |
                                     static_cast<std::uint32_t>(bytes[expected - 2]) << 16 |
                                     static_cast<std::uint32_t>(bytes[expected - 1]) << 24;
    if (crc32_of(bytes.first(expected - 4)) != stored_crc) throw ChecksumError("checkpoint: CRC-32 mismatch");

    const std::uint32_t count = r.u32();
    if (count != model.parameters().size()) {
        throw ParseError("checkpoint: parameter count " + std::to_string(count) + " does not match config (" +
                         std::to_string(model.parameters().size()) + ")");
    }
    for (std::size_t k = 0; k < count; ++k) {
        Tensor& p = model.parameters()[k];
        const std::string name = r.str(r.u16());
        if (name != model.parameter_names()[k]) {
            throw ParseError("checkpoint: parameter " + std::to_string(k) + " is \"" + name + "\", expected \"" +
                             model.parameter_names()[k] + "\"");
        }
        const std::size_t rank = r.u8();
        Shape dims(rank);
        for (auto& d : dims) d = r.u32();
        if (dims != p.dims()) {
            throw ParseError("checkpoint: parameter " + name + " has shape " + shape_string(dims) + ", expected " +
                             shape_string(p.dims()));
        }
        for (auto& v : p.values()) v = r.f32();
    }
    return {std::move(model), meta};
}

inline void save_checkpoint(const AutoencoderModel& model, const std::filesystem::path& path,
                            const TrainingMetadata& meta = {}) {
    write_file_bytes(path, encode_checkpoint(model, meta));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return decode_checkpoint(bytes);
}

inline AutoencoderModel load_checkpoint(const std::filesystem::path& path) { return read_checkpoint(path).model; }

} // namespace aecn
