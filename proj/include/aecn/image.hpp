#pragma once

// Grayscale image I/O (binary PGM) and the pixel-level transforms used by
// preprocessing and augmentation. Images are tensors [channels, height, width]
// with values in [0, 1].

#include <aecn/error.hpp>
#include <aecn/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

namespace aecn {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for " + path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

namespace detail {

class PnmHeaderReader {
public:
    PnmHeaderReader(std::span<const std::uint8_t> b, std::size_t pos) : bytes_(b), pos_(pos) {}

    std::size_t offset() const { return pos_; }

    void skip_whitespace_and_comments() {
        while (pos_ < bytes_.size()) {
            const auto c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
            } else if (is_space(c)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    unsigned long read_uint(const char* field) {
        skip_whitespace_and_comments();
        const std::size_t start = pos_;
        unsigned long v = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > 1000000UL) fail(std::string("PGM ") + field + " too large", start);
            ++pos_;
        }
        if (pos_ == start) fail(std::string("PGM: expected ") + field, start);
        return v;
    }

    // Exactly one whitespace byte separates the header from the raster.
    void expect_single_space() {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) fail("PGM: expected whitespace after maxval", pos_);
        ++pos_;
    }

    [[noreturn]] static void fail(const std::string& what, std::size_t at) {
        throw ParseError(what + " at byte offset " + std::to_string(at));
    }

private:
    static bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_;
};

} // namespace detail

/// Decodes a binary (P5) PGM with maxval <= 255 into a [1, H, W] tensor scaled by 1/maxval.
inline Tensor load_pgm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw ParseError("PGM: bad magic (expected \"P5\") at byte offset 0");
    }
    detail::PnmHeaderReader r(bytes, 2);
    const unsigned long w = r.read_uint("width");
    const unsigned long h = r.read_uint("height");
    r.skip_whitespace_and_comments();
    const std::size_t maxval_at = r.offset();
    const unsigned long maxval = r.read_uint("maxval");
    if (w == 0 || h == 0) detail::PnmHeaderReader::fail("PGM: zero width or height", 2);
    if (maxval == 0 || maxval > 255) {
        detail::PnmHeaderReader::fail("PGM: maxval " + std::to_string(maxval) + " outside 1..255", maxval_at);
    }
    r.expect_single_space();
    const std::size_t start = r.offset();
    const std::size_t need = static_cast<std::size_t>(w) * h;
    if (bytes.size() - start < need) {
        detail::PnmHeaderReader::fail("PGM: truncated raster, expected " + std::to_string(need) + " bytes, found " +
                                          std::to_string(bytes.size() - start),
                                      bytes.size());
    }
    Tensor img({1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    const float scale = static_cast<float>(maxval);
    for (std::size_t q = 0; q < need; ++q) {
        const auto v = bytes[start + q];
        if (v > maxval) detail::PnmHeaderReader::fail("PGM: sample exceeds maxval", start + q);
        img[q] = static_cast<float>(v) / scale;
    }
    return img;
}

inline Tensor load_pgm_file(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return load_pgm(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

/// 8-bit quantization, round half up: floor(v * 255 + 0.5).
inline std::uint8_t quantize_pixel(float v) {
    const double q = std::floor(static_cast<double>(v) * 255.0 + 0.5);
    return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

/// Encodes a [1, H, W] tensor with values in [0, 1] as a maxval-255 P5 PGM.
inline std::vector<std::uint8_t> encode_pgm(const Tensor& img) {
    if (img.rank() != 3 || img.dim(0) != 1) {
        throw DimensionError("encode_pgm: expected [1,h,w], got " + shape_string(img.dims()));
    }
    for (float v : img.values()) {
        if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("encode_pgm: pixel outside [0,1]");
    }
    const std::string header = "P5\n" + std::to_string(img.dim(2)) + " " + std::to_string(img.dim(1)) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.size());
    for (float v : img.values()) out.push_back(quantize_pixel(v));
    return out;
}

inline void save_pgm(const Tensor& img, const std::filesystem::path& path) {
    write_file_bytes(path, encode_pgm(img));
}

/// Bilinear resampling with half-pixel centers: a destination index d samples
/// the source at s = (d + 0.5) * in / out - 0.5, clamped to [0, in - 1].
inline Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w) {
    if (img.rank() != 3) throw DimensionError("resize_bilinear: expected [c,h,w], got " + shape_string(img.dims()));
    if (out_h == 0 || out_w == 0) throw ValidationError("resize_bilinear: output size must be positive");
    const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);

    struct Tap {
        std::size_t i0, i1;
        double f;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t d = 0; d < out; ++d) {
            const double s = std::clamp((static_cast<double>(d) + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(s));
            t[d] = {i0, std::min(i0 + 1, in - 1), s - static_cast<double>(i0)};
        }
        return t;
    };
    const auto ty = taps(h, out_h);
    const auto tx = taps(w, out_w);

    Tensor out({c, out_h, out_w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < out_h; ++y) {
            for (std::size_t x = 0; x < out_w; ++x) {
                const double a = img.at(ch, ty[y].i0, tx[x].i0), b = img.at(ch, ty[y].i0, tx[x].i1);
                const double cc = img.at(ch, ty[y].i1, tx[x].i0), d = img.at(ch, ty[y].i1, tx[x].i1);
                const double top = a + tx[x].f * (b - a);
                const double bottom = cc + tx[x].f * (d - cc);
                out.at(ch, y, x) = static_cast<float>(top + ty[y].f * (bottom - top));
            }
        }
    }
    return out;
}

inline Tensor hflip(const Tensor& img) {
    if (img.rank() != 3) throw DimensionError("hflip: expected [c,h,w], got " + shape_string(img.dims()));
    Tensor out(img.dims());
    const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out.at(ch, y, x) = img.at(ch, y, w - 1 - x);
    return out;
}

/// Adds `shift` to every pixel and clamps to [0, 1].
inline Tensor adjust_brightness(const Tensor& img, float shift) {
    Tensor out(img.dims());
    for (std::size_t q = 0; q < img.size(); ++q) out[q] = std::clamp(img[q] + shift, 0.0f, 1.0f);
    return out;
}

inline Tensor crop(const Tensor& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
    if (img.rank() != 3 || top + h > img.dim(1) || left + w > img.dim(2) || h == 0 || w == 0) {
        throw DimensionError("crop: window out of bounds for " + shape_string(img.dims()));
    }
    Tensor out({img.dim(0), h, w});
    for (std::size_t ch = 0; ch < img.dim(0); ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out.at(ch, y, x) = img.at(ch, top + y, left + x);
    return out;
}

} // namespace aecn
