#pragma once

// The `aecn` command line. run_cli() is the whole program; tools/aecn.cpp only
// forwards argv, which keeps every subcommand testable in-process.
//
// Exit codes: 0 success, 1 runtime or I/O failure, 2 usage/config/validation
// error, 3 `score --alert` found an anomalous image.

#include <aecn/anomaly.hpp>
#include <aecn/checkpoint.hpp>
#include <aecn/dataset.hpp>
#include <aecn/run_config.hpp>
#include <aecn/synth.hpp>
#include <aecn/trainer.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace aecn {

enum ExitStatus : int { exit_ok = 0, exit_runtime = 1, exit_usage = 2, exit_alert = 3 };

namespace cli_detail {

namespace fs = std::filesystem;

inline std::string fmt(double v) { return format_number(v); }

inline std::string read_text(const fs::path& p) {
    const auto bytes = read_file_bytes(p);
    return {bytes.begin(), bytes.end()};
}

inline ThresholdSpec read_threshold(const fs::path& p) {
    const std::string text = read_text(p);
    try {
        return threshold_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("threshold file " + p.string() + " is not valid JSON: " + e.what());
    }
}

inline void check_model_inputs(const AutoencoderModel& model, const std::vector<ImageRecord>& recs) {
    for (const auto& r : recs) {
        try {
            model.check_input(r.pixels.dims());
        } catch (const DimensionError& e) {
            throw DimensionError(r.id + ": " + e.what());
        }
    }
}

struct GenSynthArgs {
    std::string out;
    long long normals = 200;
    long long anomalies = 50;
    long long size = 64;
    std::uint64_t seed = 0;
};

inline int gen_synth_cmd(const GenSynthArgs& a, std::ostream& out) {
    if (a.normals < 0) throw ValidationError("--normals must be >= 0, got " + std::to_string(a.normals));
    if (a.anomalies < 0) throw ValidationError("--anomalies must be >= 0, got " + std::to_string(a.anomalies));
    if (a.size < 16) throw ValidationError("--size must be >= 16, got " + std::to_string(a.size));
    const auto m = gen_synth(static_cast<std::size_t>(a.normals), static_cast<std::size_t>(a.anomalies),
                             static_cast<std::size_t>(a.size), a.seed, a.out);
    out << "manifest: " << (m.entries.empty() ? std::string("(none, no images requested)")
                                                : (fs::path(a.out) / "manifest.csv").string())
        << "\n";
    out << "normal: " << m.count(Label::normal) << "\n";
    out << "anomalous: " << m.count(Label::anomalous) << "\n";
    return exit_ok;
}

struct TrainArgs {
    std::string config;
    std::string out;
    std::string history;
};

// Split manifests written next to the checkpoint: <ckpt>.train.csv, .val.csv,
// .test.csv and .heldout.csv (val and test together).
inline int train_cmd(const TrainArgs& a, std::ostream& out) {
    const RunConfig rc = read_run_config(a.config);
    fs::path manifest_path = rc.data.manifest;
    if (manifest_path.is_relative()) manifest_path = fs::path(a.config).parent_path() / manifest_path;
    if (!fs::is_regular_file(manifest_path)) throw ConfigError("data.manifest not found: " + manifest_path.string());

    const DatasetManifest manifest = read_manifest(manifest_path);
    ManifestSplit split;
    try {
        split = split_manifest(manifest, rc.data.split, rc.data.split_seed);
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    const auto train_set = load_records(split.train, rc.data.image_size);
    std::vector<ImageRecord> val_set;
    for (auto& r : load_records(split.val, rc.data.image_size)) {
        if (r.label == Label::normal || (rc.train.lambda_cls > 0.0f && r.label == Label::anomalous)) {
            val_set.push_back(std::move(r));
        }
    }
    out << "train images: " << train_set.size() << "\n";
    out << "validation images: " << val_set.size() << "\n";

    TrainResult result = train(build(rc.model), train_set, val_set, rc.train);
    for (const auto& e : result.history.epochs) {
        out << "epoch " << e.epoch << " train_loss " << fmt(e.train_loss) << " val_mse " << fmt(e.val_mse) << "\n";
    }
    const EpochRecord& last = result.history.epochs.back();
    TrainingMetadata meta{result.history.epochs.size(), last.train_loss, rc.train.seed};
    const auto ckpt = encode_checkpoint(result.model, meta);

    const fs::path ckpt_path = a.out;
    const fs::path dir = ckpt_path.has_parent_path() ? ckpt_path.parent_path() : fs::path(".");
    std::error_code ec;
    fs::create_directories(dir, ec);
    const std::string base = ckpt_path.string();
    ManifestSplit rebased{rebase_manifest(split.train, dir), rebase_manifest(split.val, dir),
                          rebase_manifest(split.test, dir)};
    DatasetManifest heldout = rebased.val;
    heldout.entries.insert(heldout.entries.end(), rebased.test.entries.begin(), rebased.test.entries.end());

    std::vector<std::pair<fs::path, std::string>> files{
        {ckpt_path, std::string(ckpt.begin(), ckpt.end())},
        {base + ".config.json", effective_json(rc).dump(2) + "\n"},
        {base + ".train.csv", format_manifest(rebased.train)},
        {base + ".val.csv", format_manifest(rebased.val)},
        {base + ".test.csv", format_manifest(rebased.test)},
        {base + ".heldout.csv", format_manifest(heldout)},
    };
    if (!a.history.empty()) files.emplace_back(a.history, format_history_csv(result.history));
    write_files_atomically(files);

    const double val_mse = last.val_mse;
    if (result.history.best_epoch) out << "best epoch: " << *result.history.best_epoch << "\n";
    out << "final train loss: " << fmt(last.train_loss) << "\n";
    out << "validation MSE: " << fmt(result.history.best_epoch
                                         ? result.history.epochs[*result.history.best_epoch - 1].val_mse
                                         : val_mse)
        << "\n";
    out << "checkpoint: " << ckpt_path.string() << "\n";
    return exit_ok;
}

inline void apply_eval_defaults(const std::string& config, bool method_given, bool param_given, bool bins_given,
                                std::string& method, double& param, std::size_t* n_bins) {
    if (config.empty()) return;
    const RunConfig rc = read_run_config(config);
    if (!method_given) method = method_name(rc.eval.method);
    if (!param_given) param = rc.eval.param;
    if (n_bins && !bins_given) *n_bins = rc.eval.n_bins;
}

struct CalibrateArgs {
    std::string ckpt;
    std::string manifest;
    std::string method = "percentile";
    double param = 0.95;
    std::string out;
    std::string config;
};

inline int calibrate_cmd(const CalibrateArgs& a, std::ostream& out) {
    const ThresholdMethod method = parse_method(a.method);
    if (method == ThresholdMethod::percentile && !(a.param >= 0.0 && a.param <= 1.0)) {
        throw ValidationError("--param must lie in [0, 1] for percentile, got " + fmt(a.param));
    }
    ThresholdSpec spec;
    if (method == ThresholdMethod::fixed) {
        spec = calibrate_threshold({}, method, a.param);
    } else {
        if (a.ckpt.empty() || a.manifest.empty()) {
            throw ValidationError("--method " + a.method + " needs --ckpt and --manifest");
        }
        const DatasetManifest m = read_manifest(a.manifest);
        for (const auto& e : m.entries) {
            if (e.label != Label::normal) {
                throw ValidationError("calibration manifest must be normal-only; " + e.path + " is " +
                                      std::string(label_name(e.label)));
            }
        }
        if (m.entries.empty()) throw ValidationError("calibration manifest is empty");
        const AutoencoderModel model = load_checkpoint(a.ckpt);
        const auto recs = load_records(m);
        check_model_inputs(model, recs);
        const auto errors = errors_of(score_records(model, recs));
        spec = calibrate_threshold(errors, method, a.param);
        out << "calibration images: " << errors.size() << "\n";
    }
    write_files_atomically({{a.out, to_json(spec).dump(2) + "\n"}});
    out << "threshold: " << fmt(spec.value) << "\n";
    return exit_ok;
}

struct ScoreArgs {
    std::string ckpt;
    std::vector<std::string> inputs;
    std::string threshold;
    bool alert = false;
};

inline int score_cmd(const ScoreArgs& a, std::ostream& out) {
    const ThresholdSpec t = read_threshold(a.threshold);
    const AutoencoderModel model = load_checkpoint(a.ckpt);
    std::vector<ImageRecord> recs;
    for (const auto& in : a.inputs) {
        if (fs::path(in).extension() == ".csv") {
            for (auto& r : load_records(read_manifest(in))) recs.push_back(std::move(r));
        } else {
            recs.push_back({in, load_pgm_file(in), Label::unlabeled});
        }
    }
    check_model_inputs(model, recs);
    const auto scores = score_records(model, recs);
    std::string text, alerts;
    for (const auto& s : scores) {
        const Label v = classify(s.error, t);
        text += s.id + "\t" + fmt(s.error) + "\t" + std::string(label_name(v)) + "\n";
        if (v == Label::anomalous) alerts += "ALERT " + s.id + " " + fmt(s.error) + "\n";
    }
    out << text;
    if (a.alert) {
        out << alerts;
        if (!alerts.empty()) return exit_alert;
    }
    return exit_ok;
}

struct EvalArgs {
    std::string ckpt;
    std::string manifest;
    std::string threshold;
    std::string out;
    std::size_t n_bins = default_bins;
    std::string config;
};

inline int eval_cmd(const EvalArgs& a, std::ostream& out) {
    if (a.n_bins == 0) throw ValidationError("--bins must be >= 1");
    const DatasetManifest m = read_manifest(a.manifest);
    if (m.count(Label::normal) == 0 || m.count(Label::anomalous) == 0) {
        throw ValidationError("eval manifest needs both normal and anomalous entries (has " +
                              std::to_string(m.count(Label::normal)) + " normal, " +
                              std::to_string(m.count(Label::anomalous)) + " anomalous)");
    }
    const ThresholdSpec t = read_threshold(a.threshold);
    const AutoencoderModel model = load_checkpoint(a.ckpt);
    const auto recs = load_records(m);
    check_model_inputs(model, recs);
    const auto scores = score_records(model, recs);
    const auto errors = errors_of(scores);
    const Histogram hist = build_histogram(errors, a.n_bins);
    const RocCurve roc = roc_auc(scores);
    emit_report(scores, hist, t, roc, a.out);
    const Confusion c = confusion_at(scores, t);
    out << "scored: " << scores.size() << "\n";
    out << "threshold: " << fmt(t.value) << " (" << method_name(t.method) << ")\n";
    out << "flagged anomalous: " << (c.tp + c.fp) << " (tp " << c.tp << ", fp " << c.fp << ")\n";
    out << "report: " << a.out << "\n";
    out << "AUC: " << fmt(roc.auc) << "\n";
    return exit_ok;
}

} // namespace cli_detail

/// Runs one `aecn` invocation. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    using namespace cli_detail;
    CLI::App app{"Convolutional-autoencoder anomaly detection on grayscale images", "aecn"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    GenSynthArgs gs;
    auto* c_gen = app.add_subcommand("gen-synth", "Write a synthetic corpus of PGM images plus manifest.csv");
    c_gen->add_option("--out", gs.out, "Output directory")->required();
    c_gen->add_option("--normals", gs.normals, "Number of normal images");
    c_gen->add_option("--anomalies", gs.anomalies, "Number of anomalous images");
    c_gen->add_option("--size", gs.size, "Image side in pixels (>= 16)");
    c_gen->add_option("--seed", gs.seed, "Generator seed");

    TrainArgs ta;
    auto* c_train = app.add_subcommand("train", "Train an autoencoder from a JSON run config");
    c_train->add_option("--config", ta.config, "Run config JSON")->required();
    c_train->add_option("--out", ta.out, "Checkpoint path; the effective config and split manifests go beside it")
        ->required();
    c_train->add_option("--history", ta.history, "Optional per-epoch history CSV");

    CalibrateArgs ca;
    auto* c_cal = app.add_subcommand("calibrate", "Resolve a decision threshold and write it as JSON");
    c_cal->add_option("--ckpt", ca.ckpt, "Checkpoint (needed for percentile and meanstd)");
    c_cal->add_option("--manifest", ca.manifest, "Normal-only manifest (needed for percentile and meanstd)");
    auto* o_method = c_cal->add_option("--method", ca.method, "fixed, percentile or meanstd")
                         ->check(CLI::IsMember({"fixed", "percentile", "meanstd"}));
    auto* o_param = c_cal->add_option("--param", ca.param, "Fixed value, percentile p in [0,1], or k for mean + k*std");
    c_cal->add_option("--out", ca.out, "Output threshold JSON")->required();
    c_cal->add_option("--config", ca.config, "Run config whose eval section supplies --method/--param defaults");

    ScoreArgs sa;
    auto* c_score = app.add_subcommand("score", "Score PGM images (or .csv manifests) against a threshold");
    c_score->add_option("--ckpt", sa.ckpt, "Checkpoint")->required();
    c_score->add_option("--input", sa.inputs, "PGM files or manifest .csv files")->required();
    c_score->add_option("--threshold", sa.threshold, "Threshold JSON from calibrate")->required();
    c_score->add_flag("--alert", sa.alert, "Print ALERT lines and exit 3 when any image is anomalous");

    EvalArgs ea;
    auto* c_eval = app.add_subcommand("eval", "Score a labeled manifest and write the report set");
    c_eval->add_option("--ckpt", ea.ckpt, "Checkpoint")->required();
    c_eval->add_option("--manifest", ea.manifest, "Manifest with normal and anomalous entries")->required();
    c_eval->add_option("--threshold", ea.threshold, "Threshold JSON from calibrate")->required();
    c_eval->add_option("--out", ea.out, "Report directory")->required();
    auto* o_bins = c_eval->add_option("--bins", ea.n_bins, "Histogram bins");
    c_eval->add_option("--config", ea.config, "Run config whose eval section supplies the --bins default");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (c_gen->parsed()) return gen_synth_cmd(gs, out);
        if (c_train->parsed()) return train_cmd(ta, out);
        if (c_cal->parsed()) {
            apply_eval_defaults(ca.config, o_method->count() > 0, o_param->count() > 0, true, ca.method, ca.param,
                                nullptr);
            return calibrate_cmd(ca, out);
        }
        if (c_score->parsed()) return score_cmd(sa, out);
        if (c_eval->parsed()) {
            std::string unused_method;
            double unused_param = 0.0;
            apply_eval_defaults(ea.config, true, true, o_bins->count() > 0, unused_method, unused_param, &ea.n_bins);
            return eval_cmd(ea, out);
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const UnsupportedError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    return exit_usage;
}

} // namespace aecn
