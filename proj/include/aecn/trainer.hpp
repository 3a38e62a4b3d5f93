#pragma once

// Deterministic mini-batch training. Joint objective per sample:
//   (1 - lambda) * MSE(reconstruction, image)   [normal samples only]
//   + lambda * BCE(classifier(latent), is_anomalous)
// averaged over the batch. With lambda = 0 only the reconstruction term runs.

#include <aecn/dataset.hpp>
#include <aecn/model.hpp>
#include <aecn/optim.hpp>
#include <aecn/rng.hpp>
#include <aecn/score.hpp>

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace aecn {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 16;
    OptimizerKind optimizer = OptimizerKind::adam;
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
    float lambda_cls = 0.0f;
    std::optional<std::size_t> early_stop_patience;
    std::uint64_t seed = 0;
    bool augment = false;
    AugmentPolicy augment_policy;
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_mse = std::numeric_limits<double>::quiet_NaN(); // NaN without validation data

    friend bool operator==(const EpochRecord& a, const EpochRecord& b) {
        auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
        return a.epoch == b.epoch && same(a.train_loss, b.train_loss) && same(a.val_mse, b.val_mse);
    }
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::optional<std::size_t> best_epoch; // set when early stopping selected parameters

    friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
    AutoencoderModel model;
    TrainHistory history;
};

/// Arithmetic mean of per-image reconstruction error, in input order.
inline double evaluate_mean_mse(const AutoencoderModel& model, const std::vector<ImageRecord>& data) {
    if (data.empty()) throw ValidationError("evaluate_mean_mse: empty dataset");
    double sum = 0.0;
    for (const auto& r : data) sum += static_cast<double>(reconstruction_error(model, r.pixels));
    return sum / static_cast<double>(data.size());
}

inline void validate_train_config(const TrainConfig& cfg, const AutoencoderModel& model) {
    if (cfg.epochs == 0) throw ConfigError("epochs must be >= 1");
    if (cfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(cfg.lr > 0.0f) || !std::isfinite(cfg.lr)) throw ConfigError("learning rate must be positive");
    if (!(cfg.lambda_cls >= 0.0f && cfg.lambda_cls <= 1.0f)) throw ConfigError("lambda_cls must lie in [0, 1]");
    if (cfg.lambda_cls > 0.0f && !model.config().has_classifier()) {
        throw ConfigError("lambda_cls > 0 requires a model with a classifier head");
    }
    if (cfg.early_stop_patience && *cfg.early_stop_patience == 0) throw ConfigError("patience must be >= 1");
}

inline TrainResult train(AutoencoderModel model, const std::vector<ImageRecord>& train_set,
                         const std::vector<ImageRecord>& val_set, const TrainConfig& cfg) {
    validate_train_config(cfg, model);
    if (train_set.empty()) throw ValidationError("train: empty training set");
    const bool joint = cfg.lambda_cls > 0.0f;
    for (const auto& r : train_set) {
        if (!joint && r.label != Label::normal) {
            throw ValidationError("train: reconstruction-only training requires normal images, got " +
                                  std::string(label_name(r.label)) + " " + r.id);
        }
        if (joint && r.label == Label::unlabeled) throw ValidationError("train: joint training needs labels: " + r.id);
        model.check_input(r.pixels.dims());
    }
    std::vector<ImageRecord> val_normals;
    for (const auto& r : val_set) {
        if (r.label == Label::anomalous) {
            if (!joint) throw ValidationError("train: validation set must be normal-only when lambda_cls = 0");
            continue;
        }
        val_normals.push_back(r);
    }
    if (cfg.early_stop_patience && val_normals.empty()) {
        throw ValidationError("train: early stopping needs normal validation images");
    }

    auto& params = model.parameters();
    AdamState adam(params, cfg.beta1, cfg.beta2, cfg.epsilon);
    const float lambda = cfg.lambda_cls;

    TrainHistory history;
    std::vector<Tensor> best_params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        SeededRng shuffle_rng = SeededRng::derive(cfg.seed, {0x5348, epoch});
        seeded_shuffle(order, shuffle_rng);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const float inv_b = 1.0f / static_cast<float>(end - start);
            auto grads = model.zero_gradients();
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                ImageRecord sample;
                if (cfg.augment) {
                    SeededRng aug_rng = SeededRng::derive(cfg.seed, {0x4147, epoch, idx});
                    sample = augment(train_set[idx], aug_rng, cfg.augment_policy);
                } else {
                    sample = train_set[idx];
                }
                const auto f = model.forward_sample(sample.pixels);
                double loss = 0.0;
                Tensor grad_recon(f.reconstruction.dims());
                if (sample.label == Label::normal) {
                    const auto mse = mse_loss(f.reconstruction, sample.pixels);
                    const float w = (1.0f - lambda) * inv_b;
                    for (std::size_t q = 0; q < grad_recon.size(); ++q) grad_recon[q] = w * mse.grad[q];
                    loss += (1.0 - lambda) * mse.value;
                }
                if (joint) {
                    const auto cls = model.forward_classifier(f.latent);
                    const float y = sample.label == Label::anomalous ? 1.0f : 0.0f;
                    const auto bce = bce_loss(Tensor({1}, cls.probability), Tensor({1}, y));
                    loss += lambda * bce.value;
                    const Tensor grad_latent = model.backward_classifier(cls.cache, lambda * inv_b * bce.grad[0], grads);
                    model.backward_sample(f.cache, grad_recon, &grad_latent, grads);
                } else {
                    model.backward_sample(f.cache, grad_recon, nullptr, grads);
                }
                epoch_loss += loss;
            }
            if (cfg.optimizer == OptimizerKind::adam) adam_step(adam, params, grads, cfg.lr);
            else sgd_step(params, grads, cfg.lr);
        }

        EpochRecord rec{epoch, epoch_loss / static_cast<double>(train_set.size())};
        if (!val_normals.empty()) rec.val_mse = evaluate_mean_mse(model, val_normals);
        history.epochs.push_back(rec);

        if (cfg.early_stop_patience) {
            if (rec.val_mse <= best_val - 1e-6) {
                best_val = rec.val_mse;
                best_params = params;
                history.best_epoch = epoch;
                stale = 0;
            } else if (++stale >= *cfg.early_stop_patience) {
                break;
            }
        }
    }
    if (cfg.early_stop_patience && !best_params.empty()) params = std::move(best_params);
    return {std::move(model), std::move(history)};
}

inline std::string format_history_csv(const TrainHistory& h) {
    std::string out = "epoch,train_loss,val_mse\n";
    char buf[96];
    for (const auto& e : h.epochs) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_mse);
        out += buf;
    }
    return out;
}

} // namespace aecn
