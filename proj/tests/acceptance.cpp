// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance [criterion numbers...]   (default: all)

#include "gradcheck.hpp"
#include "support.hpp"

#include <aecn/checkpoint.hpp>
#include <aecn/cli.hpp>
#include <aecn/synth.hpp>
#include <aecn/trainer.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <regex>

using namespace aecn;
using namespace aecn::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

Outcome gradient_integrity() {
    const auto t0 = std::chrono::steady_clock::now();
    std::map<std::string, GradCheck> per;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        per["conv"].merge(check_conv(seed));
        per["pool"].merge(check_maxpool(seed));
        per["upsample"].merge(check_upsample(seed));
        per["dense"].merge(check_dense(seed));
        per["relu"].merge(check_activation(seed, Activation::relu));
        per["sigmoid"].merge(check_activation(seed, Activation::sigmoid));
        per["mse"].merge(check_mse(seed));
        per["bce"].merge(check_bce(seed));
        per["autoencoder"].merge(check_autoencoder(seed, false));
        per["autoencoder+classifier"].merge(check_autoencoder(seed, true));
    }
    const double secs = seconds_since(t0);
    bool ok = secs < 30.0;
    double worst = 0.0;
    std::string worst_name;
    for (const auto& [name, gc] : per) {
        ok = ok && gc.max_rel <= 1e-3 && gc.checked > 0;
        if (gc.max_rel >= worst) {
            worst = gc.max_rel;
            worst_name = name;
        }
    }
    return {ok, fmt("20 seeds x %zu checks, max rel error %.3g (%s), %.1f s (limit 30 s)", per.size(), worst,
                    worst_name.c_str(), secs)};
}

Outcome convolution_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t exact = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto c = random_conv_case<float>(seed);
        exact += conv2d_forward(c.input, c.params) == naive_conv(c.input, c.params.kernels, c.params.bias,
                                                                 c.params.stride, c.params.padding);
    }
    const double secs = seconds_since(t0);
    return {exact == 100 && secs < 10.0, fmt("%zu/100 shapes bit-exact, %.2f s (limit 10 s)", exact, secs)};
}

Outcome overfit_sanity() {
    TempDir dir("accept-overfit");
    const auto t0 = std::chrono::steady_clock::now();
    const auto recs = load_records(gen_synth(8, 0, 64, 42, dir / "data"));
    ModelConfig mc;
    mc.seed = 7;
    TrainConfig tc;
    tc.epochs = 500;
    tc.batch_size = 4;
    tc.lr = 1e-3f;
    tc.seed = 3;
    const auto r = train(build(mc), recs, {}, tc);
    const double mse = evaluate_mean_mse(r.model, recs);
    const double secs = seconds_since(t0);
    return {mse <= 1e-3 && secs < 120.0, fmt("final mean train MSE %.3g (limit 1e-3), %.1f s (limit 120 s)", mse, secs)};
}

double parse_auc(const std::string& out) {
    const auto k = out.rfind("AUC: ");
    if (k == std::string::npos) return std::nan("");
    return std::stod(out.substr(k + 5));
}

// gen-synth -> train -> calibrate -> eval through the command line.
struct Benchmark {
    TempDir dir{"accept-bench"};
    double seconds = 0.0;
    std::string failure;
    std::string eval_out;
    std::size_t heldout_normal = 0, heldout_anomalous = 0;

    std::string p(const std::string& name) const { return (dir / name).string(); }

    Benchmark() {
        const auto t0 = std::chrono::steady_clock::now();
        auto r = cli({"gen-synth", "--out", p("data"), "--normals", "200", "--anomalies", "50", "--size", "64",
                      "--seed", "2024"});
        if (r.code != 0) {
            failure = "gen-synth: " + r.err;
            return;
        }
        spit(dir / "run.json", R"({"data": {"manifest": "data/manifest.csv", "split_seed": 11},
 "model": {"seed": 7}, "train": {"epochs": 100, "batch_size": 16, "seed": 3}})");
        r = cli({"train", "--config", p("run.json"), "--out", p("model.ckpt")});
        if (r.code != 0) {
            failure = "train: " + r.err;
            return;
        }
        r = cli({"calibrate", "--method", "fixed", "--param", "0.0127", "--out", p("threshold.json")});
        if (r.code != 0) {
            failure = "calibrate: " + r.err;
            return;
        }
        const auto held = read_manifest(dir / "model.ckpt.heldout.csv");
        heldout_normal = held.count(Label::normal);
        heldout_anomalous = held.count(Label::anomalous);
        r = cli({"eval", "--ckpt", p("model.ckpt"), "--manifest", p("model.ckpt.heldout.csv"), "--threshold",
                 p("threshold.json"), "--out", p("report")});
        if (r.code != 0) {
            failure = "eval: " + r.err;
            return;
        }
        eval_out = r.out;
        seconds = seconds_since(t0);
    }
};

Outcome end_to_end(const Benchmark& b) {
    if (!b.failure.empty()) return {false, b.failure};
    const double auc = parse_auc(b.eval_out);
    const bool split_ok = b.heldout_normal == 40 && b.heldout_anomalous == 50;
    return {auc >= 0.90 && split_ok && b.seconds <= 300.0,
            fmt("AUC %.4f (limit 0.90) on %zu normal + %zu anomalous held out, %.1f s (limit 300 s)", auc,
                b.heldout_normal, b.heldout_anomalous, b.seconds)};
}

Outcome calibration_property() {
    TempDir dir("accept-calib");
    std::size_t passed = 0;
    std::string rates;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto recs = load_records(gen_synth(260, 0, 64, seed, dir / ("s" + std::to_string(seed))));
        const std::vector<ImageRecord> train_set(recs.begin(), recs.begin() + 160), held(recs.begin() + 160, recs.end());
        ModelConfig mc;
        mc.seed = seed;
        TrainConfig tc;
        tc.epochs = 20;
        tc.batch_size = 16;
        tc.seed = seed;
        const auto r = train(build(mc), train_set, {}, tc);
        const auto t =
            calibrate_threshold(errors_of(score_records(r.model, train_set)), ThresholdMethod::percentile, 0.95);
        std::size_t fp = 0;
        for (const auto& s : score_records(r.model, held)) fp += classify(s.error, t) == Label::anomalous;
        const double fpr = static_cast<double>(fp) / static_cast<double>(held.size());
        passed += fpr <= 0.12;
        rates += fmt("%s%.2f", rates.empty() ? "" : " ", fpr);
    }
    return {passed >= 4, fmt("held-out FPR per seed [%s], %zu/5 within [0, 0.12] (need 4)", rates.c_str(), passed)};
}

Outcome auc_oracle() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        SeededRng rng = SeededRng::derive(seed, {0xAC});
        const std::size_t n = 2 + rng.below(199);
        const bool tied = seed % 2 == 0;
        const auto levels = 1 + rng.below(10);
        std::vector<ScoreRecord> s;
        for (std::size_t k = 0; k < n; ++k) {
            const float e = tied ? static_cast<float>(rng.below(levels)) * 0.005f : static_cast<float>(rng.uniform(0, 0.05));
            Label l = rng.bernoulli(0.35) ? Label::anomalous : Label::normal;
            if (k < 2) l = k == 0 ? Label::anomalous : Label::normal;
            s.push_back({std::to_string(k), e, l});
        }
        worst = std::max(worst, std::abs(roc_auc(s).auc - mann_whitney_auc(s)));
    }
    return {worst <= 1e-9, fmt("1000 instances (half with ties), max |trapezoid - Mann-Whitney| = %.3g", worst)};
}

Outcome histogram_plot(const Benchmark& b) {
    if (!b.failure.empty()) return {false, b.failure};
    std::istringstream hist(slurp(b.dir / "report" / "histogram.csv"));
    std::string line;
    std::getline(hist, line);
    std::size_t sum = 0, bins = 0;
    double lo = 0.0, hi = 0.0;
    while (std::getline(hist, line)) {
        const auto c1 = line.find(','), c2 = line.rfind(',');
        if (bins == 0) lo = std::stod(line.substr(0, c1));
        hi = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        sum += std::stoul(line.substr(c2 + 1));
        ++bins;
    }
    const std::size_t scored = b.heldout_normal + b.heldout_anomalous;

    const std::string svg = slurp(b.dir / "report" / "histogram.svg");
    std::size_t rects = 0, lines = 0;
    for (auto k = svg.find("<rect"); k != std::string::npos; k = svg.find("<rect", k + 1)) ++rects;
    double line_x = std::nan("");
    const std::regex thr(R"re(<line class="threshold" x1="([-0-9.]+)")re");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), thr); it != std::sregex_iterator(); ++it) {
        ++lines;
        line_x = std::stod((*it)[1]);
    }
    const double t = 0.0127;
    const double plot_lo = std::min(lo, t), plot_hi = std::max(hi, t);
    const double expect_x = HistogramPlot::left + (t - plot_lo) / (plot_hi - plot_lo) * HistogramPlot::width;
    const bool threshold_ok = b.eval_out.find("threshold: 0.0127 (fixed)") != std::string::npos;
    const bool ok = sum == scored && bins == default_bins && rects == default_bins && lines == 1 &&
                    std::abs(line_x - expect_x) <= 0.01 && threshold_ok;
    return {ok, fmt("histogram counts sum %zu of %zu scored; svg has %zu bars (n_bins %zu) and %zu threshold line at "
                    "x=%.4f (expected %.4f for 0.0127)",
                    sum, scored, rects, default_bins, lines, line_x, expect_x)};
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    }
    return files;
}

Outcome determinism() {
    TempDir dir("accept-det");
    const auto p = [&](const std::string& n) { return (dir / n).string(); };
    const auto pipeline = [&] {
        std::string out;
        const std::vector<std::vector<std::string>> steps{
            {"gen-synth", "--out", p("data"), "--normals", "40", "--anomalies", "10", "--size", "32", "--seed", "9"},
            {"train", "--config", p("run.json"), "--out", p("model.ckpt"), "--history", p("history.csv")},
            {"calibrate", "--ckpt", p("model.ckpt"), "--manifest", p("model.ckpt.train.csv"), "--out", p("t.json")},
            {"eval", "--ckpt", p("model.ckpt"), "--manifest", p("model.ckpt.heldout.csv"), "--threshold", p("t.json"),
             "--out", p("report")}};
        for (const auto& s : steps) {
            const auto r = cli(s);
            out += r.out + r.err + "exit " + std::to_string(r.code) + "\n";
        }
        return out;
    };
    const std::string config = R"({"data": {"manifest": "data/manifest.csv", "image_size": 32, "split_seed": 5},
 "model": {"seed": 4}, "train": {"epochs": 4, "batch_size": 8, "seed": 6, "augment": true}})";
    spit(dir / "run.json", config);
    const std::string out1 = pipeline();
    const auto files1 = snapshot(dir.path());
    for (const auto& e : fs::directory_iterator(dir.path())) fs::remove_all(e.path());
    spit(dir / "run.json", config);
    const std::string out2 = pipeline();
    const auto files2 = snapshot(dir.path());

    std::size_t differing = 0;
    for (const auto& [name, bytes] : files1) {
        const auto it = files2.find(name);
        differing += it == files2.end() || it->second != bytes;
    }
    const bool ran = out1.find("exit 1") == std::string::npos && out1.find("exit 2") == std::string::npos;
    const bool ok = ran && out1 == out2 && differing == 0 && files1.size() == files2.size() &&
                    files1.count("model.ckpt") && files1.count("report/histogram.svg");
    return {ok, fmt("%zu files compared, %zu differ; stdout %s%s", files1.size(), differing,
                    out1 == out2 ? "identical" : "differs", ran ? "" : "; a pipeline step failed")};
}

Outcome checkpoint_round_trip() {
    TempDir dir("accept-ckpt");
    const auto recs = load_records(gen_synth(50, 0, 64, 77, dir / "data"));
    ModelConfig mc;
    mc.seed = 12;
    mc.classifier_hidden = 8;
    const auto model = build(mc);
    save_checkpoint(model, dir / "m.ckpt", {3, 0.25, 1});
    const auto loaded = load_checkpoint(dir / "m.ckpt");
    std::size_t identical = 0;
    const auto a = score_records(model, recs), b = score_records(loaded, recs);
    for (std::size_t k = 0; k < a.size(); ++k) identical += std::bit_cast<std::uint32_t>(a[k].error) == std::bit_cast<std::uint32_t>(b[k].error);

    const auto bytes = encode_checkpoint(model);
    const auto throws = [](std::vector<std::uint8_t> data, auto tag) {
        try {
            decode_checkpoint(data);
        } catch (const decltype(tag)&) {
            return true;
        } catch (...) {
            return false;
        }
        return false;
    };
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    auto bad_version = bytes;
    bad_version[4] = 99;
    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 10);
    auto trailing = bytes;
    trailing.push_back(0);
    auto flipped = bytes;
    flipped[bytes.size() - 100] ^= 0x10;
    const bool e_magic = throws(bad_magic, BadMagicError("")) && !throws(bad_magic, LengthMismatchError(""));
    const bool e_version = throws(bad_version, UnsupportedVersionError(""));
    const bool e_trunc = throws(truncated, LengthMismatchError("")) && !throws(truncated, BadMagicError(""));
    const bool e_trail = throws(trailing, TrailingBytesError(""));
    const bool e_crc = throws(flipped, ChecksumError(""));
    const bool ok = identical == 50 && e_magic && e_version && e_trunc && e_trail && e_crc;
    return {ok, fmt("%zu/50 errors bit-identical after reload; bad magic %s, bad version %s, truncated %s, trailing %s, "
                    "bit flip %s",
                    identical, e_magic ? "BadMagicError" : "WRONG", e_version ? "UnsupportedVersionError" : "WRONG",
                    e_trunc ? "LengthMismatchError" : "WRONG", e_trail ? "TrailingBytesError" : "WRONG",
                    e_crc ? "ChecksumError" : "WRONG")};
}

} // namespace

int main(int argc, char** argv) {
    std::vector<int> wanted;
    for (int k = 1; k < argc; ++k) wanted.push_back(std::atoi(argv[k]));
    const auto want = [&](int n) { return wanted.empty() || std::find(wanted.begin(), wanted.end(), n) != wanted.end(); };

    std::unique_ptr<Benchmark> bench;
    const auto benchmark = [&]() -> const Benchmark& {
        if (!bench) bench = std::make_unique<Benchmark>();
        return *bench;
    };
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient integrity", gradient_integrity},
        {"convolution oracle", convolution_oracle},
        {"overfit sanity", overfit_sanity},
        {"synthetic benchmark AUC", [&] { return end_to_end(benchmark()); }},
        {"percentile calibration FPR", calibration_property},
        {"AUC oracle equivalence", auc_oracle},
        {"error histogram and threshold plot", [&] { return histogram_plot(benchmark()); }},
        {"pipeline determinism", determinism},
        {"checkpoint round trip", checkpoint_round_trip},
    };
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int n = static_cast<int>(k + 1);
        if (!want(n)) continue;
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", n, criteria[k].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
