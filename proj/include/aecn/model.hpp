#pragma once

// Convolutional autoencoder: encoder (conv/relu + max-pool stages) -> latent ->
// decoder (nearest upsample + conv/relu stages) -> 1-channel conv + sigmoid.
// An optional classifier head reads the latent through global average pooling.

#include <aecn/error.hpp>
#include <aecn/kernels.hpp>
#include <aecn/rng.hpp>
#include <aecn/tensor.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace aecn {

struct LayerSpec {
    enum class Kind { conv, pool, upsample };
    Kind kind = Kind::conv;
    std::size_t channels = 0; // conv only

    static LayerSpec conv(std::size_t c) { return {Kind::conv, c}; }
    static LayerSpec pool() { return {Kind::pool, 0}; }
    static LayerSpec upsample() { return {Kind::upsample, 0}; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

inline std::string layer_token(const LayerSpec& l) {
    switch (l.kind) {
    case LayerSpec::Kind::conv: return "conv:" + std::to_string(l.channels);
    case LayerSpec::Kind::pool: return "pool";
    case LayerSpec::Kind::upsample: return "upsample";
    }
    return "";
}

inline LayerSpec parse_layer_token(const std::string& s) {
    if (s == "pool") return LayerSpec::pool();
    if (s == "upsample") return LayerSpec::upsample();
    if (s.rfind("conv:", 0) == 0) {
        const std::string num = s.substr(5);
        if (num.empty() || num.find_first_not_of("0123456789") != std::string::npos || num.size() > 6) {
            throw ConfigError("bad conv layer token \"" + s + "\"");
        }
        const auto c = std::stoul(num);
        if (c == 0) throw ConfigError("conv layer needs at least one channel: \"" + s + "\"");
        return LayerSpec::conv(c);
    }
    throw ConfigError("unknown layer token \"" + s + "\" (expected conv:N, pool or upsample)");
}

/// Architecture description. Every hidden conv is kernel x kernel, stride 1,
/// "same" padding, followed by relu. The decoder is always closed by a conv to
/// `channels` outputs with a sigmoid.
struct ModelConfig {
    std::size_t input_size = 64;
    std::size_t channels = 1;
    std::size_t kernel = 3;
    std::vector<LayerSpec> encoder{LayerSpec::conv(16), LayerSpec::pool(), LayerSpec::conv(32), LayerSpec::pool(),
                                   LayerSpec::conv(8)};
    std::vector<LayerSpec> decoder{LayerSpec::upsample(), LayerSpec::conv(32), LayerSpec::upsample(),
                                   LayerSpec::conv(16)};
    std::size_t classifier_hidden = 0; // 0: no classifier head
    std::uint64_t seed = 0;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

    std::size_t pool_count() const {
        std::size_t n = 0;
        for (const auto& l : encoder) n += l.kind == LayerSpec::Kind::pool;
        return n;
    }

    std::size_t latent_channels() const {
        std::size_t c = channels;
        for (const auto& l : encoder) {
            if (l.kind == LayerSpec::Kind::conv) c = l.channels;
        }
        return c;
    }

    Shape latent_dims() const {
        const std::size_t s = input_size >> pool_count();
        return {latent_channels(), s, s};
    }

    bool has_classifier() const { return classifier_hidden > 0; }

    void validate() const {
        if (channels != 1) throw ConfigError("only single-channel input is supported");
        if (kernel == 0 || kernel % 2 == 0) throw ConfigError("kernel size must be odd, got " + std::to_string(kernel));
        if (input_size < 8) throw ConfigError("input size must be >= 8");
        std::size_t convs = 0;
        for (const auto& l : encoder) {
            if (l.kind == LayerSpec::Kind::upsample) throw ConfigError("upsample is only allowed in the decoder");
            convs += l.kind == LayerSpec::Kind::conv;
        }
        if (convs == 0) throw ConfigError("encoder needs at least one conv layer");
        std::size_t ups = 0;
        for (const auto& l : decoder) {
            if (l.kind == LayerSpec::Kind::pool) throw ConfigError("pool is only allowed in the encoder");
            ups += l.kind == LayerSpec::Kind::upsample;
        }
        const std::size_t pools = pool_count();
        if (pools != ups) {
            throw ConfigError("decoder does not mirror encoder: " + std::to_string(pools) + " pool vs " +
                              std::to_string(ups) + " upsample layers");
        }
        if (pools >= 16 || input_size % (std::size_t{1} << pools) != 0) {
            throw ConfigError("input size " + std::to_string(input_size) + " is not divisible by 2^" +
                              std::to_string(pools));
        }
    }
};

inline nlohmann::json to_json(const ModelConfig& c) {
    nlohmann::json enc = nlohmann::json::array(), dec = nlohmann::json::array();
    for (const auto& l : c.encoder) enc.push_back(layer_token(l));
    for (const auto& l : c.decoder) dec.push_back(layer_token(l));
    return {{"input_size", c.input_size}, {"channels", c.channels},     {"kernel", c.kernel},
            {"encoder", enc},             {"decoder", dec},              {"classifier_hidden", c.classifier_hidden},
            {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    ModelConfig c;
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "input_size") c.input_size = val.get<std::size_t>();
            else if (key == "channels") c.channels = val.get<std::size_t>();
            else if (key == "kernel") c.kernel = val.get<std::size_t>();
            else if (key == "classifier_hidden") c.classifier_hidden = val.get<std::size_t>();
            else if (key == "seed") c.seed = val.get<std::uint64_t>();
            else if (key == "encoder" || key == "decoder") {
                std::vector<LayerSpec> layers;
                for (const auto& t : val) layers.push_back(parse_layer_token(t.get<std::string>()));
                (key == "encoder" ? c.encoder : c.decoder) = std::move(layers);
            } else {
                throw ConfigError("unknown model config key \"" + key + "\"");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

template <class T>
struct BasicForwardCache {
    std::vector<BasicTensor<T>> inputs; // conv steps: layer input
    std::vector<BasicTensor<T>> pre;    // conv steps: pre-activation
    std::vector<PoolCache> pools;       // pool steps
};

template <class T>
struct BasicSampleForward {
    BasicTensor<T> reconstruction; // [1, H, W]
    BasicTensor<T> latent;         // [c, h, w]
    BasicForwardCache<T> cache;
};

template <class T>
struct BasicClassifierCache {
    BasicTensor<T> pooled;     // [c]
    BasicTensor<T> hidden_pre; // [hidden]
    BasicTensor<T> hidden;     // [hidden]
    BasicTensor<T> logit;      // [1]
    Shape latent_dims;
};

template <class T>
struct BasicClassifierForward {
    T probability = T(0);
    BasicClassifierCache<T> cache;
};

template <class T>
struct BasicBatchForward {
    BasicTensor<T> reconstruction; // [B, 1, H, W]
    BasicTensor<T> latent;         // [B, c, h, w]
    std::vector<BasicForwardCache<T>> cache;
};

/// Autoencoder with materialized parameters. `parameters` is ordered: hidden
/// convs (encoder then decoder), output conv, then the classifier head.
template <class T>
class BasicAutoencoder {
public:
    struct Step {
        LayerSpec::Kind kind;
        Activation activation = Activation::relu;
        std::size_t weight = 0; // index of the kernel tensor; bias follows
    };

    BasicAutoencoder() = default;

    /// Shapes from `config`; parameters zero. Use build() for initialized models.
    explicit BasicAutoencoder(ModelConfig config) : config_(std::move(config)) {
        config_.validate();
        const std::size_t k = config_.kernel;
        std::size_t c = config_.channels;
        std::size_t enc_idx = 0, dec_idx = 0;
        auto add_conv = [&](const std::string& prefix, std::size_t c_out, Activation act) {
            steps_.push_back({LayerSpec::Kind::conv, act, params_.size()});
            names_.push_back(prefix + ".weight");
            params_.emplace_back(Shape{c_out, c, k, k});
            names_.push_back(prefix + ".bias");
            params_.emplace_back(Shape{c_out});
            c = c_out;
        };
        for (const auto& l : config_.encoder) {
            if (l.kind == LayerSpec::Kind::conv) add_conv("encoder.conv" + std::to_string(enc_idx++), l.channels, Activation::relu);
            else steps_.push_back({l.kind});
        }
        encoder_steps_ = steps_.size();
        for (const auto& l : config_.decoder) {
            if (l.kind == LayerSpec::Kind::conv) add_conv("decoder.conv" + std::to_string(dec_idx++), l.channels, Activation::relu);
            else steps_.push_back({l.kind});
        }
        add_conv("output", config_.channels, Activation::sigmoid);
        if (config_.has_classifier()) {
            head_ = params_.size();
            const std::size_t lc = config_.latent_channels(), hid = config_.classifier_hidden;
            names_.insert(names_.end(), {"head.hidden.weight", "head.hidden.bias", "head.out.weight", "head.out.bias"});
            params_.emplace_back(Shape{hid, lc});
            params_.emplace_back(Shape{hid});
            params_.emplace_back(Shape{1, hid});
            params_.emplace_back(Shape{1});
        }
    }

    const ModelConfig& config() const { return config_; }
    const std::vector<std::string>& parameter_names() const { return names_; }
    const std::vector<BasicTensor<T>>& parameters() const { return params_; }
    std::vector<BasicTensor<T>>& parameters() { return params_; }
    const std::vector<Step>& steps() const { return steps_; }
    std::size_t encoder_steps() const { return encoder_steps_; }
    std::optional<std::size_t> head_index() const { return head_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.size();
        return n;
    }

    std::vector<BasicTensor<T>> zero_gradients() const {
        std::vector<BasicTensor<T>> g;
        g.reserve(params_.size());
        for (const auto& p : params_) g.emplace_back(p.dims());
        return g;
    }

    template <class U>
    BasicAutoencoder<U> cast() const {
        BasicAutoencoder<U> m(config_);
        for (std::size_t k = 0; k < params_.size(); ++k) m.parameters()[k] = params_[k].template cast<U>();
        return m;
    }

    void check_input(const Shape& d) const {
        const Shape want{config_.channels, config_.input_size, config_.input_size};
        if (d != want) {
            throw DimensionError("model expects input " + shape_string(want) + ", got " + shape_string(d));
        }
    }

    BasicSampleForward<T> forward_sample(const BasicTensor<T>& x) const {
        check_input(x.dims());
        BasicSampleForward<T> r;
        r.cache.inputs.resize(steps_.size());
        r.cache.pre.resize(steps_.size());
        r.cache.pools.resize(steps_.size());
        BasicTensor<T> cur = x;
        for (std::size_t s = 0; s < steps_.size(); ++s) {
            const Step& st = steps_[s];
            switch (st.kind) {
            case LayerSpec::Kind::conv: {
                BasicTensor<T> pre = conv2d_forward(cur, conv_params(st));
                r.cache.inputs[s] = std::move(cur);
                cur = activation_forward(pre, st.activation);
                r.cache.pre[s] = std::move(pre);
                break;
            }
            case LayerSpec::Kind::pool: {
                auto p = maxpool2d(cur);
                r.cache.pools[s] = std::move(p.cache);
                cur = std::move(p.output);
                break;
            }
            case LayerSpec::Kind::upsample: cur = upsample_nearest(cur, 2); break;
            }
            if (s + 1 == encoder_steps_) r.latent = cur;
        }
        r.reconstruction = std::move(cur);
        return r;
    }

    /// Batch forward over [B, C, H, W].
    BasicBatchForward<T> forward(const BasicTensor<T>& batch) const {
        if (batch.rank() != 4) throw DimensionError("forward: expected [B,C,H,W], got " + shape_string(batch.dims()));
        const std::size_t b = batch.dim(0);
        const Shape item{batch.dim(1), batch.dim(2), batch.dim(3)};
        check_input(item);
        const std::size_t n = shape_product(item);
        const Shape ld = config_.latent_dims();
        const std::size_t ln = shape_product(ld);
        BasicBatchForward<T> r{BasicTensor<T>(batch.dims()), BasicTensor<T>({b, ld[0], ld[1], ld[2]}), {}};
        for (std::size_t i = 0; i < b; ++i) {
            std::vector<T> xs(batch.data() + i * n, batch.data() + (i + 1) * n);
            auto f = forward_sample(BasicTensor<T>(item, std::move(xs)));
            std::copy_n(f.reconstruction.data(), n, r.reconstruction.data() + i * n);
            std::copy_n(f.latent.data(), ln, r.latent.data() + i * ln);
            r.cache.push_back(std::move(f.cache));
        }
        return r;
    }

    /// Accumulates parameter gradients for one sample into `grads`.
    /// `grad_latent`, when present, is added to the gradient flowing into the latent.
    void backward_sample(const BasicForwardCache<T>& cache, const BasicTensor<T>& grad_reconstruction,
                         const BasicTensor<T>* grad_latent, std::vector<BasicTensor<T>>& grads) const {
        BasicTensor<T> g = grad_reconstruction;
        for (std::size_t s = steps_.size(); s-- > 0;) {
            if (s + 1 == encoder_steps_ && grad_latent) {
                require_same_shape(g.dims(), grad_latent->dims(), "backward latent gradient");
                for (std::size_t q = 0; q < g.size(); ++q) g[q] += (*grad_latent)[q];
            }
            const Step& st = steps_[s];
            switch (st.kind) {
            case LayerSpec::Kind::conv: {
                const BasicTensor<T> gpre = activation_backward(g, cache.pre[s], st.activation);
                auto cg = conv2d_backward(gpre, cache.inputs[s], conv_params(st));
                add_into(grads[st.weight], cg.kernels);
                add_into(grads[st.weight + 1], cg.bias);
                g = std::move(cg.input);
                break;
            }
            case LayerSpec::Kind::pool: g = maxpool2d_backward(g, cache.pools[s]); break;
            case LayerSpec::Kind::upsample: g = upsample_nearest_backward(g, 2); break;
            }
        }
    }

    /// Global average pool -> dense(hidden) -> relu -> dense(1) -> sigmoid.
    BasicClassifierForward<T> forward_classifier(const BasicTensor<T>& latent) const {
        if (!head_) throw UnsupportedError("model has no classifier head");
        require_same_shape(latent.dims(), config_.latent_dims(), "forward_classifier latent");
        const std::size_t c = latent.dim(0), hw = latent.dim(1) * latent.dim(2);
        BasicClassifierForward<T> r;
        r.cache.latent_dims = latent.dims();
        r.cache.pooled = BasicTensor<T>({c});
        for (std::size_t ch = 0; ch < c; ++ch) {
            T s = T(0);
            for (std::size_t q = 0; q < hw; ++q) s += latent[ch * hw + q];
            r.cache.pooled[ch] = s / static_cast<T>(hw);
        }
        const std::size_t h = *head_;
        r.cache.hidden_pre = dense_forward(r.cache.pooled, params_[h], params_[h + 1]);
        r.cache.hidden = activation_forward(r.cache.hidden_pre, Activation::relu);
        r.cache.logit = dense_forward(r.cache.hidden, params_[h + 2], params_[h + 3]);
        r.probability = sigmoid(r.cache.logit[0]);
        return r;
    }

    /// Accumulates head gradients for d(loss)/d(probability) = grad_probability
    /// and returns the gradient w.r.t. the latent.
    BasicTensor<T> backward_classifier(const BasicClassifierCache<T>& cache, T grad_probability,
                                       std::vector<BasicTensor<T>>& grads) const {
        if (!head_) throw UnsupportedError("model has no classifier head");
        const std::size_t h = *head_;
        const BasicTensor<T> g_logit =
            activation_backward(BasicTensor<T>({1}, grad_probability), cache.logit, Activation::sigmoid);
        auto d_out = dense_backward(g_logit, cache.hidden, params_[h + 2]);
        add_into(grads[h + 2], d_out.weights);
        add_into(grads[h + 3], d_out.bias);
        const BasicTensor<T> g_hidden_pre = activation_backward(d_out.input, cache.hidden_pre, Activation::relu);
        auto d_hid = dense_backward(g_hidden_pre, cache.pooled, params_[h]);
        add_into(grads[h], d_hid.weights);
        add_into(grads[h + 1], d_hid.bias);
        BasicTensor<T> gl(cache.latent_dims);
        const std::size_t c = gl.dim(0), hw = gl.dim(1) * gl.dim(2);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T v = d_hid.input[ch] / static_cast<T>(hw);
            for (std::size_t q = 0; q < hw; ++q) gl[ch * hw + q] = v;
        }
        return gl;
    }

private:
    BasicConvParams<T> conv_params(const Step& st) const {
        const std::size_t pad = config_.kernel / 2;
        return {params_[st.weight], params_[st.weight + 1], 1, pad};
    }

    static void add_into(BasicTensor<T>& acc, const BasicTensor<T>& g) {
        T* a = acc.data();
        const T* b = g.data();
        for (std::size_t q = 0; q < acc.size(); ++q) a[q] += b[q];
    }

    ModelConfig config_;
    std::vector<std::string> names_;
    std::vector<BasicTensor<T>> params_;
    std::vector<Step> steps_;
    std::size_t encoder_steps_ = 0;
    std::optional<std::size_t> head_;
};

using AutoencoderModel = BasicAutoencoder<float>;

/// Builds and initializes a model from `config.seed`. Kernels feeding a relu
/// get He-normal weights (std sqrt(2 / fan_in)); kernels feeding a sigmoid get
/// Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out))). Biases are zero.
/// Parameters are drawn in order from a single stream.
inline AutoencoderModel build(const ModelConfig& config) {
    AutoencoderModel m(config);
    SeededRng rng(config.seed);
    auto he = [&](Tensor& w, std::size_t fan_in) {
        const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& v : w.values()) v = static_cast<float>(sd * rng.normal());
    };
    auto glorot = [&](Tensor& w, std::size_t fan_in, std::size_t fan_out) {
        const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& v : w.values()) v = static_cast<float>(rng.uniform(-lim, lim));
    };
    auto& params = m.parameters();
    for (const auto& st : m.steps()) {
        if (st.kind != LayerSpec::Kind::conv) continue;
        Tensor& w = params[st.weight];
        const std::size_t taps = w.dim(2) * w.dim(3);
        if (st.activation == Activation::relu) he(w, w.dim(1) * taps);
        else glorot(w, w.dim(1) * taps, w.dim(0) * taps);
    }
    if (const auto h = m.head_index()) {
        he(params[*h], params[*h].dim(1));
        glorot(params[*h + 2], params[*h + 2].dim(1), 1);
    }
    return m;
}

} // namespace aecn
