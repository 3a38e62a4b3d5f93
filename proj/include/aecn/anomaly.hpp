#pragma once

// Reconstruction-error scoring, error histogram, threshold calibration,
// classification, ROC/AUC and report emission. Anomalous is the positive class
// throughout; a larger reconstruction error ranks more anomalous.

#include <aecn/dataset.hpp>
#include <aecn/error.hpp>
#include <aecn/model.hpp>
#include <aecn/score.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

namespace aecn {

struct ScoreRecord {
    std::string id;
    float error = 0.0f;
    Label label = Label::unlabeled;
};

inline std::vector<ScoreRecord> score_records(const AutoencoderModel& model, const std::vector<ImageRecord>& records) {
    std::vector<ScoreRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back({r.id, reconstruction_error(model, r.pixels), r.label});
    return out;
}

inline std::vector<float> errors_of(std::span<const ScoreRecord> scores) {
    std::vector<float> e;
    e.reserve(scores.size());
    for (const auto& s : scores) e.push_back(s.error);
    return e;
}

struct Histogram {
    std::vector<double> edges;        // n_bins + 1, strictly increasing
    std::vector<std::size_t> counts;  // n_bins

    std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
};

inline constexpr std::size_t default_bins = 50;

/// Uniform bins over [min, max] of the errors ([v, v + 1e-9] when all are equal).
/// Bins are half-open [lo, hi) except the last, which is closed.
inline Histogram build_histogram(std::span<const float> errors, std::size_t n_bins = default_bins) {
    if (errors.empty()) throw ValidationError("build_histogram: no errors");
    if (n_bins == 0) throw ValidationError("build_histogram: need at least one bin");
    const auto [mn, mx] = std::minmax_element(errors.begin(), errors.end());
    double lo = *mn, hi = *mx;
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw ValidationError("build_histogram: non-finite error");
    if (hi <= lo) hi = lo + 1e-9;
    Histogram h;
    h.edges.resize(n_bins + 1);
    const double width = (hi - lo) / static_cast<double>(n_bins);
    for (std::size_t k = 0; k <= n_bins; ++k) h.edges[k] = lo + width * static_cast<double>(k);
    h.edges.back() = hi;
    h.counts.assign(n_bins, 0);
    for (float ef : errors) {
        const double e = ef;
        auto k = static_cast<std::size_t>(std::clamp(std::floor((e - lo) / width), 0.0, static_cast<double>(n_bins - 1)));
        // Reconcile the arithmetic bin index with the stored edges.
        while (k > 0 && e < h.edges[k]) --k;
        while (k + 1 < n_bins && e >= h.edges[k + 1]) ++k;
        ++h.counts[k];
    }
    return h;
}

enum class ThresholdMethod { fixed, percentile, mean_plus_k_std };

inline std::string method_name(ThresholdMethod m) {
    switch (m) {
    case ThresholdMethod::fixed: return "fixed";
    case ThresholdMethod::percentile: return "percentile";
    case ThresholdMethod::mean_plus_k_std: return "meanstd";
    }
    return "";
}

inline ThresholdMethod parse_method(const std::string& s) {
    if (s == "fixed") return ThresholdMethod::fixed;
    if (s == "percentile") return ThresholdMethod::percentile;
    if (s == "meanstd") return ThresholdMethod::mean_plus_k_std;
    throw ValidationError("unknown threshold method \"" + s + "\" (expected fixed, percentile or meanstd)");
}

struct ThresholdSpec {
    ThresholdMethod method = ThresholdMethod::fixed;
    double param = 0.0; // fixed value, percentile p, or k
    double value = 0.0; // resolved threshold

    friend bool operator==(const ThresholdSpec&, const ThresholdSpec&) = default;
};

/// Resolves a threshold. percentile(p) is the lower order statistic
/// sorted[ceil(p * n) - 1] (index clamped to [0, n - 1]); mean_plus_k_std uses
/// the population standard deviation.
inline ThresholdSpec calibrate_threshold(std::span<const float> training_errors, ThresholdMethod method, double param) {
    ThresholdSpec spec{method, param, 0.0};
    if (!std::isfinite(param)) throw ValidationError("threshold parameter must be finite");
    if (method == ThresholdMethod::fixed) {
        spec.value = param;
        return spec;
    }
    if (training_errors.empty()) throw ValidationError("calibrate_threshold: no training errors");
    const auto n = training_errors.size();
    if (method == ThresholdMethod::percentile) {
        if (param < 0.0 || param > 1.0) throw ValidationError("percentile must lie in [0, 1], got " + std::to_string(param));
        std::vector<float> sorted(training_errors.begin(), training_errors.end());
        std::sort(sorted.begin(), sorted.end());
        double rank = param * static_cast<double>(n);
        // Snap products like 0.95 * 100 = 94.99999999999999 onto the integer they denote.
        const double nearest = std::round(rank);
        if (std::abs(rank - nearest) < 1e-9 * std::max(1.0, static_cast<double>(n))) rank = nearest;
        const double idx = std::clamp(std::ceil(rank) - 1.0, 0.0, static_cast<double>(n - 1));
        spec.value = sorted[static_cast<std::size_t>(idx)];
        return spec;
    }
    double mean = 0.0;
    for (float e : training_errors) mean += e;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (float e : training_errors) var += (e - mean) * (e - mean);
    var /= static_cast<double>(n);
    spec.value = mean + param * std::sqrt(var);
    return spec;
}

inline nlohmann::json to_json(const ThresholdSpec& t) {
    return {{"method", method_name(t.method)}, {"param", t.param}, {"value", t.value}};
}

inline ThresholdSpec threshold_from_json(const nlohmann::json& j) {
    try {
        for (const auto& [key, _] : j.items()) {
            if (key != "method" && key != "param" && key != "value") {
                throw ValidationError("threshold JSON: unknown key \"" + key + "\"");
            }
        }
        ThresholdSpec t{parse_method(j.at("method").get<std::string>()), j.at("param").get<double>(),
                        j.at("value").get<double>()};
        if (!std::isfinite(t.value)) throw ValidationError("threshold JSON: value must be finite");
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("threshold JSON: ") + e.what());
    }
}

/// Anomalous iff the error strictly exceeds the threshold.
inline Label classify(double error, const ThresholdSpec& threshold) {
    return error > threshold.value ? Label::anomalous : Label::normal;
}

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points; // from (0, 0) to (1, 1)
    double auc = 0.0;
};

/// ROC by sweeping the threshold down through the distinct scores, with the
/// trapezoidal area. Unlabeled records are ignored.
inline RocCurve roc_auc(std::span<const ScoreRecord> scores) {
    std::vector<std::pair<float, bool>> s; // (error, is_anomalous)
    for (const auto& r : scores) {
        if (r.label != Label::unlabeled) s.emplace_back(r.error, r.label == Label::anomalous);
    }
    const auto pos = static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](const auto& p) { return p.second; }));
    const std::size_t neg = s.size() - pos;
    if (pos == 0 || neg == 0) throw ValidationError("roc_auc: need at least one normal and one anomalous record");
    std::stable_sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    RocCurve c;
    c.points.push_back({0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    double area2 = 0.0; // twice the area, in units of (count x count)
    for (std::size_t i = 0; i < s.size();) {
        const std::size_t tp0 = tp, fp0 = fp;
        std::size_t j = i;
        for (; j < s.size() && s[j].first == s[i].first; ++j) (s[j].second ? tp : fp) += 1;
        area2 += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0);
        c.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos)});
        i = j;
    }
    c.auc = area2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    return c;
}

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t unlabeled = 0;
    std::size_t total() const { return tp + fp + tn + fn + unlabeled; }
};

inline Confusion confusion_at(std::span<const ScoreRecord> scores, const ThresholdSpec& t) {
    Confusion c;
    for (const auto& s : scores) {
        const bool flagged = classify(s.error, t) == Label::anomalous;
        if (s.label == Label::unlabeled) ++c.unlabeled;
        else if (s.label == Label::anomalous) ++(flagged ? c.tp : c.fn);
        else ++(flagged ? c.fp : c.tn);
    }
    return c;
}

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

/// Plot geometry of histogram.svg. The x axis spans the histogram range
/// widened to include the threshold: x(v) = left + (v - lo) / (hi - lo) * width.
struct HistogramPlot {
    static constexpr double canvas_w = 640, canvas_h = 360;
    static constexpr double left = 60, right = 20, top = 30, bottom = 50;
    static constexpr double width = canvas_w - left - right;
    static constexpr double height = canvas_h - top - bottom;
    double lo = 0.0, hi = 1.0;

    static HistogramPlot fit(const Histogram& h, double threshold) {
        HistogramPlot p;
        p.lo = std::min(h.edges.front(), threshold);
        p.hi = std::max(h.edges.back(), threshold);
        if (p.hi <= p.lo) p.hi = p.lo + 1e-9;
        return p;
    }
    double x(double v) const { return left + (v - lo) / (hi - lo) * width; }
};

inline std::string render_histogram_svg(const Histogram& h, const ThresholdSpec& t) {
    const auto plot = HistogramPlot::fit(h, t.value);
    const std::size_t peak = std::max<std::size_t>(1, *std::max_element(h.counts.begin(), h.counts.end()));
    char buf[256];
    std::string svg;
    std::snprintf(buf, sizeof buf,
                  "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"%.0f\" height=\"%.0f\">\n",
                  HistogramPlot::canvas_w, HistogramPlot::canvas_h);
    svg += buf;
    svg += "<title>Histogram of reconstruction errors</title>\n";
    const double base = HistogramPlot::top + HistogramPlot::height;
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
        const double x0 = plot.x(h.edges[k]), x1 = plot.x(h.edges[k + 1]);
        const double bh = HistogramPlot::height * static_cast<double>(h.counts[k]) / static_cast<double>(peak);
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%.4f\" y=\"%.4f\" width=\"%.4f\" height=\"%.4f\" fill=\"#4a78b5\" stroke=\"#ffffff\" "
                      "stroke-width=\"0.5\"/>\n",
                      x0, base - bh, x1 - x0, bh);
        svg += buf;
    }
    std::snprintf(buf, sizeof buf, "<path d=\"M%.4f %.4f V%.4f H%.4f\" fill=\"none\" stroke=\"#000000\"/>\n",
                  HistogramPlot::left, HistogramPlot::top, base, HistogramPlot::left + HistogramPlot::width);
    svg += buf;
    const double tx = plot.x(t.value);
    std::snprintf(buf, sizeof buf,
                  "<line class=\"threshold\" x1=\"%.4f\" y1=\"%.4f\" x2=\"%.4f\" y2=\"%.4f\" stroke=\"#d62728\" "
                  "stroke-width=\"2\" stroke-dasharray=\"6 3\"/>\n",
                  tx, HistogramPlot::top, tx, base);
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.4f\" y=\"%.4f\" font-size=\"12\" font-family=\"sans-serif\" fill=\"#d62728\">threshold "
                  "%s</text>\n",
                  tx + 4, HistogramPlot::top + 12, format_number(t.value).c_str());
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.4f\" y=\"%.4f\" font-size=\"11\" font-family=\"sans-serif\">%s</text>\n"
                  "<text x=\"%.4f\" y=\"%.4f\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">%s</text>\n",
                  HistogramPlot::left, base + 16, format_number(plot.lo).c_str(), HistogramPlot::left + HistogramPlot::width,
                  base + 16, format_number(plot.hi).c_str());
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.4f\" y=\"%.4f\" font-size=\"12\" font-family=\"sans-serif\" "
                  "text-anchor=\"middle\">reconstruction error</text>\n"
                  "<text x=\"%.4f\" y=\"%.4f\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">%zu</text>\n",
                  HistogramPlot::left + HistogramPlot::width / 2, base + 36, HistogramPlot::left - 6,
                  HistogramPlot::top + 4, peak);
    svg += buf;
    svg += "</svg>\n";
    return svg;
}

struct ReportFiles {
    std::string scores_csv;
    std::string histogram_csv;
    std::string roc_csv;
    std::string summary_txt;
    std::string histogram_svg;
};

inline ReportFiles render_report(std::span<const ScoreRecord> scores, const Histogram& hist, const ThresholdSpec& t,
                                 const RocCurve& roc) {
    ReportFiles f;
    f.scores_csv = "id,error,label,verdict\n";
    for (const auto& s : scores) {
        f.scores_csv += s.id + "," + format_number(s.error) + "," + std::string(label_name(s.label)) + "," +
                        std::string(label_name(classify(s.error, t))) + "\n";
    }
    f.histogram_csv = "bin_lo,bin_hi,count\n";
    for (std::size_t k = 0; k < hist.counts.size(); ++k) {
        f.histogram_csv += format_number(hist.edges[k]) + "," + format_number(hist.edges[k + 1]) + "," +
                           std::to_string(hist.counts[k]) + "\n";
    }
    f.roc_csv = "fpr,tpr\n";
    for (const auto& p : roc.points) f.roc_csv += format_number(p.fpr) + "," + format_number(p.tpr) + "\n";

    double sum = 0.0, mx = 0.0;
    for (const auto& s : scores) {
        sum += s.error;
        mx = std::max(mx, static_cast<double>(s.error));
    }
    const Confusion c = confusion_at(scores, t);
    const auto line = [](const std::string& k, const std::string& v) { return k + ": " + v + "\n"; };
    f.summary_txt += line("count", std::to_string(scores.size()));
    f.summary_txt += line("mean_error", format_number(scores.empty() ? 0.0 : sum / static_cast<double>(scores.size())));
    f.summary_txt += line("max_error", format_number(mx));
    f.summary_txt += line("threshold_method", method_name(t.method));
    f.summary_txt += line("threshold_param", format_number(t.param));
    f.summary_txt += line("threshold_value", format_number(t.value));
    f.summary_txt += line("auc", format_number(roc.auc));
    f.summary_txt += line("true_positive", std::to_string(c.tp));
    f.summary_txt += line("false_positive", std::to_string(c.fp));
    f.summary_txt += line("true_negative", std::to_string(c.tn));
    f.summary_txt += line("false_negative", std::to_string(c.fn));
    f.summary_txt += line("unlabeled", std::to_string(c.unlabeled));
    f.histogram_svg = render_histogram_svg(hist, t);
    return f;
}

/// Writes each (path, content) pair. Every file is first written to a hidden
/// temporary name beside its target; the set is renamed into place only after
/// all writes succeed.
inline void write_files_atomically(const std::vector<std::pair<std::filesystem::path, std::string>>& files) {
    namespace fs = std::filesystem;
    std::error_code ec;
    std::vector<fs::path> temps;
    auto cleanup = [&] {
        for (const auto& p : temps) fs::remove(p, ec);
    };
    try {
        for (const auto& [path, content] : files) {
            const fs::path tmp = path.parent_path() / ("." + path.filename().string() + ".tmp");
            temps.push_back(tmp);
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
            out.write(content.data(), static_cast<std::streamsize>(content.size()));
            out.flush();
            if (!out) throw IoError("write failed for " + tmp.string());
        }
        for (std::size_t k = 0; k < files.size(); ++k) {
            fs::rename(temps[k], files[k].first, ec);
            if (ec) throw IoError("cannot rename " + temps[k].string() + " to " + files[k].first.string() + ": " + ec.message());
        }
    } catch (...) {
        cleanup();
        throw;
    }
}

inline void emit_report(std::span<const ScoreRecord> scores, const Histogram& hist, const ThresholdSpec& t,
                        const RocCurve& roc, const std::filesystem::path& out_dir) {
    if (hist.total() != scores.size()) {
        throw ValidationError("emit_report: histogram holds " + std::to_string(hist.total()) + " errors but " +
                              std::to_string(scores.size()) + " records were scored");
    }
    const ReportFiles f = render_report(scores, hist, t, roc);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) throw IoError("cannot create report directory " + out_dir.string());
    write_files_atomically({{out_dir / "scores.csv", f.scores_csv},
                            {out_dir / "histogram.csv", f.histogram_csv},
                            {out_dir / "roc.csv", f.roc_csv},
                            {out_dir / "summary.txt", f.summary_txt},
                            {out_dir / "histogram.svg", f.histogram_svg}});
}

} // namespace aecn
