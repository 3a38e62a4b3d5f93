#pragma once

#include <aecn/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace aecn {

template <class T>
struct BasicLossValue {
    T value = T(0);
    BasicTensor<T> grad; // d value / d prediction
};
using LossValue = BasicLossValue<float>;

/// Mean squared error with mean reduction over all elements.
template <class T>
BasicLossValue<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    require_same_shape(pred.dims(), target.dims(), "mse_loss");
    const std::size_t n = pred.size();
    BasicLossValue<T> r{T(0), BasicTensor<T>(pred.dims())};
    const T inv_n = T(1) / static_cast<T>(n);
    const T scale = T(2) / static_cast<T>(n);
    T sum = T(0);
    for (std::size_t q = 0; q < n; ++q) {
        const T d = pred[q] - target[q];
        sum += d * d;
        r.grad[q] = scale * d;
    }
    r.value = sum * inv_n;
    return r;
}

inline constexpr double bce_clamp = 1e-7;

/// Binary cross-entropy over probabilities, clamped to [1e-7, 1 - 1e-7].
/// Labels must be exactly 0 or 1.
template <class T>
BasicLossValue<T> bce_loss(const BasicTensor<T>& prob, const BasicTensor<T>& label) {
    require_same_shape(prob.dims(), label.dims(), "bce_loss");
    const std::size_t n = prob.size();
    BasicLossValue<T> r{T(0), BasicTensor<T>(prob.dims())};
    const T lo = static_cast<T>(bce_clamp);
    const T hi = T(1) - static_cast<T>(bce_clamp);
    const T inv_n = T(1) / static_cast<T>(n);
    T sum = T(0);
    for (std::size_t q = 0; q < n; ++q) {
        const T y = label[q];
        if (y != T(0) && y != T(1)) {
            throw ValidationError("bce_loss: label at index " + std::to_string(q) + " is not 0 or 1");
        }
        const T p = std::min(hi, std::max(lo, prob[q]));
        sum += y == T(1) ? -std::log(p) : -std::log(T(1) - p);
        r.grad[q] = inv_n * (p - y) / (p * (T(1) - p));
    }
    r.value = sum * inv_n;
    return r;
}

/// Plain gradient descent: p <- p - lr * g for every parameter tensor.
inline void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, float lr) {
    if (params.size() != grads.size()) {
        throw DimensionError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                             std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        require_same_shape(params[k].dims(), grads[k].dims(), "sgd_step");
        float* p = params[k].data();
        const float* g = grads[k].data();
        for (std::size_t q = 0; q < params[k].size(); ++q) p[q] -= lr * g[q];
    }
}

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t t = 0;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;

    AdamState() = default;

    /// Zero moments mirroring `params`.
    explicit AdamState(const std::vector<Tensor>& params, float b1 = 0.9f, float b2 = 0.999f, float eps = 1e-8f)
        : t(0), beta1(b1), beta2(b2), epsilon(eps) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (const auto& p : params) {
            m.emplace_back(p.dims());
            v.emplace_back(p.dims());
        }
    }
};

/// One Adam update with bias correction. The step counter is incremented
/// before the correction terms are computed, so the first step uses t = 1.
inline void adam_step(AdamState& state, std::vector<Tensor>& params, const std::vector<Tensor>& grads, float lr) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw DimensionError("adam_step: parameter, gradient and state counts differ");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        require_same_shape(params[k].dims(), grads[k].dims(), "adam_step");
        require_same_shape(params[k].dims(), state.m[k].dims(), "adam_step state");
    }
    state.t += 1;
    const float b1 = state.beta1, b2 = state.beta2;
    const float corr1 = 1.0f - static_cast<float>(std::pow(static_cast<double>(b1), static_cast<double>(state.t)));
    const float corr2 = 1.0f - static_cast<float>(std::pow(static_cast<double>(b2), static_cast<double>(state.t)));
    for (std::size_t k = 0; k < params.size(); ++k) {
        float* p = params[k].data();
        float* m = state.m[k].data();
        float* v = state.v[k].data();
        const float* g = grads[k].data();
        for (std::size_t q = 0; q < params[k].size(); ++q) {
            m[q] = b1 * m[q] + (1.0f - b1) * g[q];
            v[q] = b2 * v[q] + (1.0f - b2) * g[q] * g[q];
            const float m_hat = m[q] / corr1;
            const float v_hat = v[q] / corr2;
            p[q] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

} // namespace aecn
