#pragma once

// Synthetic chest-radiograph-like corpus: a dark field with two bright
// elliptical "lung fields". Anomalous images add one bright disk inside a lung.
// It is a desk-scale stand-in for clinical data, not a model of it.

#include <aecn/dataset.hpp>
#include <aecn/image.hpp>
#include <aecn/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <system_error>

namespace aecn {

struct SynthStyle {
    float background = 0.1f;
    float lung_intensity = 0.5f;
    double lung_offset_x = 0.18; // centers at 0.5 -/+ offset, as a fraction of size
    double lung_radius_x = 0.14;
    double lung_radius_y = 0.30;
    double lung_edge = 0.15; // soft-edge half width, fraction of radius
    double center_jitter = 0.05;
    double radius_jitter = 0.10;
    float intensity_jitter = 0.1f;
    float noise_sigma = 0.02f;
    double disk_radius_min = 0.08;
    double disk_radius_max = 0.16;
    float disk_intensity = 0.4f;
};

struct Ellipse {
    double cx, cy, rx, ry;
    float intensity;

    bool contains(double x, double y) const {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        return dx * dx + dy * dy <= 1.0;
    }
};

struct SynthSample {
    Tensor normal;    // the normal image
    Tensor anomalous; // normal plus disk; empty for normal-only draws
};

namespace detail {

inline void paint_ellipse(Tensor& img, const Ellipse& e, float value, bool additive) {
    const std::size_t h = img.dim(1), w = img.dim(2);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (e.contains(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) {
                float& p = img.at(0, y, x);
                p = additive ? std::min(1.0f, p + value) : value;
            }
        }
    }
}

// Blends `value` over the image with a smoothstep falloff across the band
// [1 - edge, 1 + edge] of normalized elliptical radius.
inline void paint_soft_ellipse(Tensor& img, const Ellipse& e, float value, double edge) {
    const std::size_t h = img.dim(1), w = img.dim(2);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = (static_cast<double>(x) + 0.5 - e.cx) / e.rx;
            const double dy = (static_cast<double>(y) + 0.5 - e.cy) / e.ry;
            const double t = std::clamp((1.0 + edge - std::sqrt(dx * dx + dy * dy)) / (2.0 * edge), 0.0, 1.0);
            const double a = t * t * (3.0 - 2.0 * t);
            if (a > 0.0) {
                float& p = img.at(0, y, x);
                p = static_cast<float>(p + a * (static_cast<double>(value) - p));
            }
        }
    }
}

} // namespace detail

/// One synthetic image pair drawn from `rng`. Draw order is fixed: two lungs
/// (center x, center y, radius x, radius y, intensity each), pixel noise in
/// row-major order, then (when `with_anomaly`) lung choice, disk radius and
/// disk center by rejection sampling.
inline SynthSample synth_image(SeededRng& rng, std::size_t size, bool with_anomaly, const SynthStyle& st = {}) {
    const double s = static_cast<double>(size);
    Tensor img({1, size, size}, st.background);
    Ellipse lungs[2];
    for (int k = 0; k < 2; ++k) {
        const double sign = k == 0 ? -1.0 : 1.0;
        Ellipse& e = lungs[k];
        e.cx = s * (0.5 + sign * st.lung_offset_x + rng.uniform(-st.center_jitter, st.center_jitter));
        e.cy = s * (0.5 + rng.uniform(-st.center_jitter, st.center_jitter));
        e.rx = s * st.lung_radius_x * (1.0 + rng.uniform(-st.radius_jitter, st.radius_jitter));
        e.ry = s * st.lung_radius_y * (1.0 + rng.uniform(-st.radius_jitter, st.radius_jitter));
        e.intensity = st.lung_intensity + static_cast<float>(rng.uniform(-st.intensity_jitter, st.intensity_jitter));
        detail::paint_soft_ellipse(img, e, e.intensity, st.lung_edge);
    }
    for (auto& p : img.values()) {
        p = std::clamp(p + st.noise_sigma * static_cast<float>(rng.normal()), 0.0f, 1.0f);
    }
    SynthSample out{img, {}};
    if (with_anomaly) {
        const Ellipse& lung = lungs[rng.below(2)];
        const double r = s * rng.uniform(st.disk_radius_min, st.disk_radius_max);
        double x, y;
        do {
            x = lung.cx + lung.rx * rng.uniform(-1.0, 1.0);
            y = lung.cy + lung.ry * rng.uniform(-1.0, 1.0);
        } while (!lung.contains(x, y));
        out.anomalous = img;
        detail::paint_ellipse(out.anomalous, Ellipse{x, y, r, r, 0.0f}, st.disk_intensity, true);
    }
    return out;
}

/// Writes `n_normal` + `n_anomalous` PGM images plus manifest.csv into `out_dir`.
/// Image k of each class is drawn from SeededRng::derive(seed, {class, k}), so the
/// corpus does not depend on generation order.
inline DatasetManifest gen_synth(std::size_t n_normal, std::size_t n_anomalous, std::size_t size, std::uint64_t seed,
                                 const std::filesystem::path& out_dir, const SynthStyle& style = {}) {
    if (size < 16) throw ValidationError("gen_synth: size must be >= 16, got " + std::to_string(size));
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw IoError("cannot create output directory " + out_dir.string() + (ec ? ": " + ec.message() : ""));
    }
    DatasetManifest m{out_dir, {}};
    auto name = [](const char* prefix, std::size_t k) {
        std::string num = std::to_string(k);
        if (num.size() < 4) num.insert(0, 4 - num.size(), '0');
        return std::string(prefix) + "_" + num + ".pgm";
    };
    for (std::size_t k = 0; k < n_normal; ++k) {
        SeededRng rng = SeededRng::derive(seed, {0, k});
        const std::string file = name("normal", k);
        save_pgm(synth_image(rng, size, false, style).normal, out_dir / file);
        m.entries.push_back({file, Label::normal});
    }
    for (std::size_t k = 0; k < n_anomalous; ++k) {
        SeededRng rng = SeededRng::derive(seed, {1, k});
        const std::string file = name("anomalous", k);
        save_pgm(synth_image(rng, size, true, style).anomalous, out_dir / file);
        m.entries.push_back({file, Label::anomalous});
    }
    if (!m.entries.empty()) write_manifest(m, out_dir / "manifest.csv");
    return m;
}

} // namespace aecn
