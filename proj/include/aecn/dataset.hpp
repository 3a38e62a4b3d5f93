#pragma once

// Labeled images, CSV manifests, train/val/test splitting and augmentation.

#include <aecn/error.hpp>
#include <aecn/image.hpp>
#include <aecn/rng.hpp>
#include <aecn/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aecn {

enum class Label { normal, anomalous, unlabeled };

inline std::string_view label_name(Label l) {
    switch (l) {
    case Label::normal: return "normal";
    case Label::anomalous: return "anomalous";
    case Label::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

inline Label parse_label(std::string_view s) {
    if (s == "normal") return Label::normal;
    if (s == "anomalous") return Label::anomalous;
    if (s == "unlabeled") return Label::unlabeled;
    throw ValidationError("unknown label \"" + std::string(s) + "\" (expected normal, anomalous or unlabeled)");
}

struct ImageRecord {
    std::string id;
    Tensor pixels; // [1, H, W], values in [0, 1]
    Label label = Label::unlabeled;
};

struct ManifestEntry {
    std::string path; // relative to the manifest's directory
    Label label = Label::unlabeled;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;

    std::size_t count(Label l) const {
        return static_cast<std::size_t>(
            std::count_if(entries.begin(), entries.end(), [l](const ManifestEntry& e) { return e.label == l; }));
    }
};

inline void check_unique_paths(const DatasetManifest& m) {
    std::set<std::string> seen;
    for (const auto& e : m.entries) {
        if (!seen.insert(e.path).second) throw ValidationError("manifest: duplicate path " + e.path);
    }
}

/// Parses a `path,label` CSV. `root` becomes the directory containing the manifest.
inline DatasetManifest parse_manifest(std::string_view text, std::filesystem::path root) {
    DatasetManifest m{std::move(root), {}};
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool header_seen = false;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!header_seen) {
            if (line != "path,label") throw ParseError("manifest: expected header \"path,label\" on line 1");
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string_view::npos || comma == 0) {
            throw ParseError("manifest: malformed row on line " + std::to_string(line_no));
        }
        m.entries.push_back({std::string(line.substr(0, comma)), parse_label(line.substr(comma + 1))});
    }
    if (!header_seen) throw ParseError("manifest: empty file");
    check_unique_paths(m);
    return m;
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str(), path.parent_path());
}

inline std::string format_manifest(const DatasetManifest& m) {
    std::string out = "path,label\n";
    for (const auto& e : m.entries) {
        out += e.path;
        out += ',';
        out += label_name(e.label);
        out += '\n';
    }
    return out;
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    const std::string text = format_manifest(m);
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// Same entries, with paths rewritten relative to `new_root` so the manifest
/// can be written there.
inline DatasetManifest rebase_manifest(const DatasetManifest& m, const std::filesystem::path& new_root) {
    namespace fs = std::filesystem;
    const fs::path to = fs::absolute(new_root).lexically_normal();
    DatasetManifest out{new_root, {}};
    for (const auto& e : m.entries) {
        const fs::path target = fs::absolute(m.root / e.path).lexically_normal();
        out.entries.push_back({target.lexically_relative(to).generic_string(), e.label});
    }
    return out;
}

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct ManifestSplit {
    DatasetManifest train;
    DatasetManifest val;
    DatasetManifest test;
};

template <class Seq>
void seeded_shuffle(Seq& items, SeededRng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

/// Seeded split into train/val/test. Only normal entries reach the training
/// split: normals are allocated floor(n * val) and floor(n * test) to the
/// held-out splits with the remainder going to train; all other entries are
/// divided between val and test in proportion val : test (floor to val).
inline ManifestSplit split_manifest(const DatasetManifest& m, SplitRatios r, std::uint64_t seed) {
    if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
        throw ValidationError("split ratios must be non-negative and sum to 1");
    }
    std::vector<ManifestEntry> normals, others;
    for (const auto& e : m.entries) (e.label == Label::normal ? normals : others).push_back(e);
    if (normals.empty()) throw ValidationError("split_manifest: manifest has no normal entries");
    if (!others.empty() && r.val + r.test <= 0) {
        throw ValidationError("split_manifest: non-normal entries need a val or test share");
    }

    SeededRng rng_n = SeededRng::derive(seed, {0});
    SeededRng rng_o = SeededRng::derive(seed, {1});
    seeded_shuffle(normals, rng_n);
    seeded_shuffle(others, rng_o);

    const auto floor_share = [](std::size_t n, double f) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(n) * f + 1e-9));
    };
    const std::size_t n = normals.size();
    const std::size_t n_val = floor_share(n, r.val);
    const std::size_t n_test = floor_share(n, r.test);
    const std::size_t n_train = n - n_val - n_test;
    const std::size_t o_val = others.empty() ? 0 : floor_share(others.size(), r.val / (r.val + r.test));

    ManifestSplit s{{m.root, {}}, {m.root, {}}, {m.root, {}}};
    for (std::size_t i = 0; i < n; ++i) {
        (i < n_train ? s.train : i < n_train + n_val ? s.val : s.test).entries.push_back(normals[i]);
    }
    for (std::size_t i = 0; i < others.size(); ++i) (i < o_val ? s.val : s.test).entries.push_back(others[i]);
    return s;
}

/// Loads every entry. With `image_size` set, images are bilinearly resized to
/// image_size x image_size (the preprocessing step); otherwise kept as stored.
inline std::vector<ImageRecord> load_records(const DatasetManifest& m, std::optional<std::size_t> image_size = {}) {
    std::vector<ImageRecord> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        Tensor px = load_pgm_file(m.root / e.path);
        if (image_size && (px.dim(1) != *image_size || px.dim(2) != *image_size)) {
            px = resize_bilinear(px, *image_size, *image_size);
        }
        if (px.dim(1) < 8 || px.dim(2) < 8) throw ValidationError("image " + e.path + " is smaller than 8x8");
        out.push_back({e.path, std::move(px), e.label});
    }
    return out;
}

struct AugmentPolicy {
    double hflip_probability = 0.5;
    double brightness_range = 0.1; // shift drawn uniformly from [-range, +range]
    double crop_area = 0.9;        // fraction of area kept before resizing back; 1 disables
};

/// Random flip, brightness shift and crop-then-resize. Draws are consumed in
/// that order (flip, brightness, crop row, crop column) regardless of outcome.
inline ImageRecord augment(const ImageRecord& rec, SeededRng& rng, const AugmentPolicy& policy = {}) {
    ImageRecord out{rec.id, rec.pixels, rec.label};
    const bool flip = rng.bernoulli(policy.hflip_probability);
    const double shift = rng.uniform(-policy.brightness_range, policy.brightness_range);
    const std::size_t h = rec.pixels.dim(1), w = rec.pixels.dim(2);
    const double side = std::sqrt(std::clamp(policy.crop_area, 0.0, 1.0));
    const auto ch = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side * static_cast<double>(h))), 1, h);
    const auto cw = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side * static_cast<double>(w))), 1, w);
    const auto top = static_cast<std::size_t>(rng.below(h - ch + 1));
    const auto left = static_cast<std::size_t>(rng.below(w - cw + 1));

    if (flip) out.pixels = hflip(out.pixels);
    if (shift != 0.0) out.pixels = adjust_brightness(out.pixels, static_cast<float>(shift));
    if (ch != h || cw != w) out.pixels = resize_bilinear(crop(out.pixels, top, left, ch, cw), h, w);
    return out;
}

} // namespace aecn
