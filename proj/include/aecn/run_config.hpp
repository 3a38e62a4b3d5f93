#pragma once

// RunConfig: the JSON document driving `aecn train`.
//
//   {
//     "data":  {"manifest": "data/manifest.csv", "image_size": 64,
//               "split": {"train": 0.8, "val": 0.1, "test": 0.1}, "split_seed": 0},
//     "model": { ModelConfig keys },
//     "train": {"epochs": 100, "batch_size": 16, "optimizer": "adam", "lr": 0.001,
//               "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "lambda_cls": 0,
//               "patience": null, "seed": 0, "augment": false},
//     "eval":  {"threshold": {"method": "percentile", "param": 0.95}, "n_bins": 50}
//   }
//
// Every section and key is optional except data.manifest. Unknown keys are
// rejected. effective_json() materializes every default.

#include <aecn/anomaly.hpp>
#include <aecn/dataset.hpp>
#include <aecn/error.hpp>
#include <aecn/model.hpp>
#include <aecn/trainer.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>

namespace aecn {

struct DataConfig {
    std::string manifest;
    std::optional<std::size_t> image_size; // defaults to model.input_size
    SplitRatios split;
    std::uint64_t split_seed = 0;
};

struct EvalConfig {
    ThresholdMethod method = ThresholdMethod::percentile;
    double param = 0.95;
    std::size_t n_bins = default_bins;
};

struct RunConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
};

namespace detail {

inline void only_keys(const nlohmann::json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : obj.items()) {
        bool known = false;
        for (const char* k : keys) known = known || key == k;
        if (!known) throw ConfigError("unknown key \"" + where + "." + key + "\"");
    }
}

inline std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw ConfigError("train.optimizer must be \"adam\" or \"sgd\", got \"" + s + "\"");
}

} // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    using detail::only_keys;
    RunConfig rc;
    only_keys(j, "config", {"data", "model", "train", "eval"});
    try {
        if (!j.contains("data")) throw ConfigError("config needs a \"data\" section with \"manifest\"");
        const auto& d = j.at("data");
        only_keys(d, "data", {"manifest", "image_size", "split", "split_seed"});
        if (!d.contains("manifest")) throw ConfigError("data.manifest is required");
        rc.data.manifest = d.at("manifest").get<std::string>();
        if (d.contains("image_size") && !d.at("image_size").is_null()) rc.data.image_size = d.at("image_size").get<std::size_t>();
        if (d.contains("split")) {
            const auto& s = d.at("split");
            only_keys(s, "data.split", {"train", "val", "test"});
            if (s.contains("train")) rc.data.split.train = s.at("train").get<double>();
            if (s.contains("val")) rc.data.split.val = s.at("val").get<double>();
            if (s.contains("test")) rc.data.split.test = s.at("test").get<double>();
        }
        if (d.contains("split_seed")) rc.data.split_seed = d.at("split_seed").get<std::uint64_t>();

        if (j.contains("model")) rc.model = model_config_from_json(j.at("model"));
        const bool explicit_size = j.contains("model") && j.at("model").contains("input_size");
        if (rc.data.image_size && !explicit_size) rc.model.input_size = *rc.data.image_size;
        rc.model.validate();
        if (!rc.data.image_size) rc.data.image_size = rc.model.input_size;
        if (*rc.data.image_size != rc.model.input_size) {
            throw ConfigError("data.image_size (" + std::to_string(*rc.data.image_size) +
                              ") differs from model.input_size (" + std::to_string(rc.model.input_size) + ")");
        }

        if (j.contains("train")) {
            const auto& t = j.at("train");
            only_keys(t, "train", {"epochs", "batch_size", "optimizer", "lr", "beta1", "beta2", "eps", "lambda_cls",
                                   "patience", "seed", "augment"});
            auto& c = rc.train;
            if (t.contains("epochs")) c.epochs = t.at("epochs").get<std::size_t>();
            if (t.contains("batch_size")) c.batch_size = t.at("batch_size").get<std::size_t>();
            if (t.contains("optimizer")) c.optimizer = detail::parse_optimizer(t.at("optimizer").get<std::string>());
            if (t.contains("lr")) c.lr = t.at("lr").get<float>();
            if (t.contains("beta1")) c.beta1 = t.at("beta1").get<float>();
            if (t.contains("beta2")) c.beta2 = t.at("beta2").get<float>();
            if (t.contains("eps")) c.epsilon = t.at("eps").get<float>();
            if (t.contains("lambda_cls")) c.lambda_cls = t.at("lambda_cls").get<float>();
            if (t.contains("patience") && !t.at("patience").is_null()) c.early_stop_patience = t.at("patience").get<std::size_t>();
            if (t.contains("seed")) c.seed = t.at("seed").get<std::uint64_t>();
            if (t.contains("augment")) c.augment = t.at("augment").get<bool>();
        }

        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            only_keys(e, "eval", {"threshold", "n_bins"});
            if (e.contains("threshold")) {
                const auto& th = e.at("threshold");
                only_keys(th, "eval.threshold", {"method", "param"});
                if (th.contains("method")) rc.eval.method = parse_method(th.at("method").get<std::string>());
                if (th.contains("param")) rc.eval.param = th.at("param").get<double>();
            }
            if (e.contains("n_bins")) rc.eval.n_bins = e.at("n_bins").get<std::size_t>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    if (rc.eval.n_bins == 0) throw ConfigError("eval.n_bins must be >= 1");
    if (rc.eval.method == ThresholdMethod::percentile && !(rc.eval.param >= 0.0 && rc.eval.param <= 1.0)) {
        throw ConfigError("eval.threshold.param must lie in [0, 1] for percentile");
    }
    const auto& s = rc.data.split;
    if (s.train < 0 || s.val < 0 || s.test < 0 || std::abs(s.train + s.val + s.test - 1.0) > 1e-9) {
        throw ConfigError("data.split ratios must be non-negative and sum to 1");
    }
    validate_train_config(rc.train, AutoencoderModel(rc.model));
    return rc;
}

inline nlohmann::json effective_json(const RunConfig& rc) {
    nlohmann::json j;
    j["data"] = {{"manifest", rc.data.manifest},
                 {"image_size", rc.data.image_size.value_or(rc.model.input_size)},
                 {"split", {{"train", rc.data.split.train}, {"val", rc.data.split.val}, {"test", rc.data.split.test}}},
                 {"split_seed", rc.data.split_seed}};
    j["model"] = to_json(rc.model);
    const auto& t = rc.train;
    j["train"] = {{"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"optimizer", detail::optimizer_name(t.optimizer)},
                  {"lr", t.lr},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"eps", t.epsilon},
                  {"lambda_cls", t.lambda_cls},
                  {"patience", t.early_stop_patience ? nlohmann::json(*t.early_stop_patience) : nlohmann::json(nullptr)},
                  {"seed", t.seed},
                  {"augment", t.augment}};
    j["eval"] = {{"threshold", {{"method", method_name(rc.eval.method)}, {"param", rc.eval.param}}},
                 {"n_bins", rc.eval.n_bins}};
    return j;
}

inline RunConfig read_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

} // namespace aecn
