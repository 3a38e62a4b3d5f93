#pragma once

// Forward and backward kernels for the layers the autoencoder is built from.
//
// All kernels operate on a single sample laid out [channels, height, width].
// They are pure functions; accumulation happens in the tensor's scalar type in
// a fixed order so results are bit-reproducible. Convolution sums each output
// element over input channel first, then kernel row, then kernel column, with
// the bias added last.

#include <aecn/tensor.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <string>
#include <vector>

namespace aecn {

template <class T>
struct BasicConvParams {
    BasicTensor<T> kernels; // [c_out, c_in, kH, kW]
    BasicTensor<T> bias;    // [c_out]
    std::size_t stride = 1;
    std::size_t padding = 0;
};
using ConvParams = BasicConvParams<float>;

template <class T>
struct ConvGrads {
    BasicTensor<T> input;
    BasicTensor<T> kernels;
    BasicTensor<T> bias;
};

namespace detail {

struct ConvGeometry {
    std::size_t c_in, h, w;
    std::size_t c_out, kh, kw;
    std::size_t stride, pad;
    std::size_t out_h, out_w;
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                                   const char* axis, const Shape& in_dims, const Shape& k_dims) {
    const std::size_t padded = in + 2 * pad;
    if (k > padded || (padded - k) % stride != 0) {
        throw DimensionError(std::string("conv2d: ") + axis + " extent incompatible: input " +
                             shape_string(in_dims) + " kernels " + shape_string(k_dims) + " stride " +
                             std::to_string(stride) + " padding " + std::to_string(pad));
    }
    return (padded - k) / stride + 1;
}

template <class T>
ConvGeometry conv_geometry(const Shape& in, const BasicConvParams<T>& p) {
    const Shape& kd = p.kernels.dims();
    if (in.size() != 3 || kd.size() != 4) {
        throw DimensionError("conv2d: expected input [c,h,w] and kernels [o,c,kh,kw], got " + shape_string(in) +
                             " and " + shape_string(kd));
    }
    if (kd[1] != in[0]) {
        throw DimensionError("conv2d: channel mismatch between input " + shape_string(in) + " and kernels " +
                             shape_string(kd));
    }
    if (p.bias.dims() != Shape{kd[0]}) {
        throw DimensionError("conv2d: bias " + shape_string(p.bias.dims()) + " does not match kernels " +
                             shape_string(kd));
    }
    if (p.stride == 0) throw DimensionError("conv2d: stride must be >= 1");
    ConvGeometry g{};
    g.c_in = in[0];
    g.h = in[1];
    g.w = in[2];
    g.c_out = kd[0];
    g.kh = kd[2];
    g.kw = kd[3];
    g.stride = p.stride;
    g.pad = p.padding;
    g.out_h = conv_out_extent(g.h, g.kh, g.stride, g.pad, "height", in, kd);
    g.out_w = conv_out_extent(g.w, g.kw, g.stride, g.pad, "width", in, kd);
    return g;
}

// Output indices o in [lo, hi) whose tap o*stride + k - pad lands inside [0, in).
struct Range {
    std::size_t lo, hi;
};

inline Range valid_range(std::size_t k, std::size_t in, std::size_t out, std::size_t stride, std::size_t pad) {
    std::size_t lo = 0;
    if (k < pad) lo = (pad - k + stride - 1) / stride;
    if (in + pad <= k) return {0, 0};
    const std::size_t hi = std::min(out, (in - 1 + pad - k) / stride + 1);
    return {lo, std::max(lo, hi)};
}

} // namespace detail

namespace detail {

template <class T>
std::vector<T> zero_pad(const T* src, std::size_t c, std::size_t h, std::size_t w, std::size_t pad) {
    const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
    std::vector<T> out(c * hp * wp, T(0));
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
            std::copy_n(src + (ch * h + y) * w, w, out.data() + (ch * hp + y + pad) * wp + pad);
        }
    }
    return out;
}

template <class T, std::size_t N>
struct SimdVec;
template <>
struct SimdVec<float, 4> {
    typedef float type __attribute__((vector_size(16)));
};
template <>
struct SimdVec<double, 4> {
    typedef double type __attribute__((vector_size(32)));
};
template <>
struct SimdVec<float, 8> {
    typedef float type __attribute__((vector_size(32)));
};
template <>
struct SimdVec<double, 8> {
    typedef double type __attribute__((vector_size(64)));
};

// One register tile: NB output channels x NX adjacent output columns of one row,
// stride 1. Each element accumulates over (c, i, j) in order, then adds bias.
template <class T, std::size_t NB, std::size_t NX>
void correlate_tile(const T* in, std::size_t c_in, std::size_t hp, std::size_t wp, const T* k, std::size_t kh,
                    std::size_t kw, std::size_t o0, std::size_t y, std::size_t x0, const T* bias, T* out,
                    std::size_t out_h, std::size_t out_w) {
    using Vec = typename SimdVec<T, NX>::type;
    Vec acc[NB] = {};
    const std::size_t kstride = c_in * kh * kw;
    for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
            const T* row = in + (c * hp + y + i) * wp + x0;
            const T* kr = k + o0 * kstride + (c * kh + i) * kw;
            for (std::size_t j = 0; j < kw; ++j) {
                Vec src;
                std::memcpy(&src, row + j, sizeof(Vec));
                for (std::size_t b = 0; b < NB; ++b) acc[b] += kr[b * kstride + j] * src;
            }
        }
    }
    for (std::size_t b = 0; b < NB; ++b) {
        const Vec r = acc[b] + (bias ? bias[o0 + b] : T(0));
        std::memcpy(out + ((o0 + b) * out_h + y) * out_w + x0, &r, sizeof(Vec));
    }
}

// Same accumulation order as correlate_tile for arbitrary stride and tile extents.
template <class T>
void correlate_generic(const T* in, std::size_t c_in, std::size_t hp, std::size_t wp, const T* k, std::size_t kh,
                       std::size_t kw, std::size_t stride, std::size_t o, std::size_t y, std::size_t x0,
                       std::size_t nx, const T* bias, T* out, std::size_t out_h, std::size_t out_w) {
    for (std::size_t x = x0; x < x0 + nx; ++x) {
        T acc = T(0);
        for (std::size_t c = 0; c < c_in; ++c) {
            for (std::size_t i = 0; i < kh; ++i) {
                const T* row = in + (c * hp + y * stride + i) * wp + x * stride;
                const T* kr = k + ((o * c_in + c) * kh + i) * kw;
                for (std::size_t j = 0; j < kw; ++j) acc += kr[j] * row[j];
            }
        }
        out[(o * out_h + y) * out_w + x] = acc + (bias ? bias[o] : T(0));
    }
}

// out[o, y, x] = bias[o] + sum_{c,i,j} in[c, y*stride + i, x*stride + j] * k[o, c, i, j]
// over an already padded input of extent [c_in, hp, wp].
template <class T>
void correlate(const T* in, std::size_t c_in, std::size_t hp, std::size_t wp, const T* k, std::size_t c_out,
               std::size_t kh, std::size_t kw, std::size_t stride, const T* bias, T* out, std::size_t out_h,
               std::size_t out_w) {
    constexpr std::size_t nb = 8, nx = 8;
    for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x0 = 0; x0 < out_w; x0 += nx) {
            const std::size_t n = std::min(nx, out_w - x0);
            std::size_t o = 0;
            if (stride == 1 && n == nx) {
                for (; o + nb <= c_out; o += nb) {
                    correlate_tile<T, nb, nx>(in, c_in, hp, wp, k, kh, kw, o, y, x0, bias, out, out_h, out_w);
                }
                for (; o < c_out; ++o) {
                    correlate_tile<T, 1, nx>(in, c_in, hp, wp, k, kh, kw, o, y, x0, bias, out, out_h, out_w);
                }
            }
            for (; o < c_out; ++o) {
                correlate_generic(in, c_in, hp, wp, k, kh, kw, stride, o, y, x0, n, bias, out, out_h, out_w);
            }
        }
    }
}

inline constexpr std::size_t grad_lanes = 8;

template <class T>
void reduce_lanes(const T* part, std::size_t taps, T* dst) {
    for (std::size_t t = 0; t < taps; ++t) {
        T s = T(0);
        for (std::size_t l = 0; l < grad_lanes; ++l) s += part[t * grad_lanes + l];
        dst[t] = s;
    }
}

template <class T>
void kernel_grad_3x3(const T* go, const T* in, std::size_t wp, std::size_t out_h, std::size_t out_w, T* dst) {
    using Vec = typename SimdVec<T, grad_lanes>::type;
    Vec part[9] = {};
    for (std::size_t y = 0; y < out_h; ++y) {
        const T* a = go + y * out_w;
        const T* rows[3] = {in + y * wp, in + (y + 1) * wp, in + (y + 2) * wp};
        for (std::size_t x = 0; x < out_w; x += grad_lanes) {
            Vec av;
            std::memcpy(&av, a + x, sizeof(Vec));
            for (std::size_t i = 0; i < 3; ++i) {
                for (std::size_t j = 0; j < 3; ++j) {
                    Vec bv;
                    std::memcpy(&bv, rows[i] + x + j, sizeof(Vec));
                    part[i * 3 + j] += av * bv;
                }
            }
        }
    }
    T flat[9 * grad_lanes];
    std::memcpy(flat, part, sizeof(flat));
    reduce_lanes(flat, 9, dst);
}

template <class T>
void kernel_grad_generic(const T* go, const T* in, std::size_t wp, std::size_t out_h, std::size_t out_w,
                         std::size_t kh, std::size_t kw, std::size_t stride, T* dst) {
    std::vector<T> part(kh * kw * grad_lanes, T(0));
    for (std::size_t y = 0; y < out_h; ++y) {
        const T* a = go + y * out_w;
        for (std::size_t i = 0; i < kh; ++i) {
            const T* row = in + (y * stride + i) * wp;
            for (std::size_t j = 0; j < kw; ++j) {
                T* pt = part.data() + (i * kw + j) * grad_lanes;
                for (std::size_t x = 0; x < out_w; ++x) pt[x % grad_lanes] += a[x] * row[x * stride + j];
            }
        }
    }
    reduce_lanes(part.data(), kh * kw, dst);
}

} // namespace detail

/// 2-D cross-correlation with symmetric zero padding.
///
/// output[o, y, x] = bias[o] + sum over (c, i, j) of input[c, y*stride + i - pad, x*stride + j - pad] * kernels[o, c, i, j],
/// where out-of-range input reads as 0. The sum runs over c, then i, then j.
template <class T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicConvParams<T>& p) {
    const auto g = detail::conv_geometry(input.dims(), p);
    BasicTensor<T> out({g.c_out, g.out_h, g.out_w});
    const std::vector<T> padded = detail::zero_pad(input.data(), g.c_in, g.h, g.w, g.pad);
    detail::correlate(padded.data(), g.c_in, g.h + 2 * g.pad, g.w + 2 * g.pad, p.kernels.data(), g.c_out, g.kh, g.kw,
                      g.stride, p.bias.data(), out.data(), g.out_h, g.out_w);
    return out;
}

/// Exact gradients of sum(grad_out * conv2d_forward(input, p)) w.r.t. input, kernels and bias.
template <class T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& input,
                             const BasicConvParams<T>& p) {
    const auto g = detail::conv_geometry(input.dims(), p);
    require_same_shape(grad_out.dims(), Shape{g.c_out, g.out_h, g.out_w}, "conv2d_backward grad_out");

    ConvGrads<T> r{BasicTensor<T>(input.dims()), BasicTensor<T>(p.kernels.dims()), BasicTensor<T>(p.bias.dims())};
    const std::size_t plane = g.out_h * g.out_w;
    const T* go = grad_out.data();
    const T* k = p.kernels.data();

    for (std::size_t o = 0; o < g.c_out; ++o) {
        T s = T(0);
        for (std::size_t q = 0; q < plane; ++q) s += go[o * plane + q];
        r.bias[o] = s;
    }

    if (g.stride == 1 && g.pad < g.kh && g.pad < g.kw) {
        // Unit stride: grad_input is a full correlation of grad_out with the
        // spatially flipped, channel-transposed kernels.
        std::vector<T> flipped(p.kernels.size());
        for (std::size_t o = 0; o < g.c_out; ++o)
            for (std::size_t c = 0; c < g.c_in; ++c)
                for (std::size_t i = 0; i < g.kh; ++i)
                    for (std::size_t j = 0; j < g.kw; ++j)
                        flipped[((c * g.c_out + o) * g.kh + (g.kh - 1 - i)) * g.kw + (g.kw - 1 - j)] =
                            k[((o * g.c_in + c) * g.kh + i) * g.kw + j];
        const std::size_t full_pad_h = g.kh - 1 - g.pad, full_pad_w = g.kw - 1 - g.pad;
        std::vector<T> gp((g.c_out) * (g.out_h + 2 * full_pad_h) * (g.out_w + 2 * full_pad_w), T(0));
        const std::size_t gph = g.out_h + 2 * full_pad_h, gpw = g.out_w + 2 * full_pad_w;
        for (std::size_t o = 0; o < g.c_out; ++o)
            for (std::size_t y = 0; y < g.out_h; ++y)
                std::copy_n(go + (o * g.out_h + y) * g.out_w, g.out_w, gp.data() + (o * gph + y + full_pad_h) * gpw + full_pad_w);
        detail::correlate<T>(gp.data(), g.c_out, gph, gpw, flipped.data(), g.c_in, g.kh, g.kw, 1, nullptr,
                             r.input.data(), g.h, g.w);
    } else {
        T* gi = r.input.data();
        for (std::size_t o = 0; o < g.c_out; ++o)
            for (std::size_t c = 0; c < g.c_in; ++c)
                for (std::size_t i = 0; i < g.kh; ++i)
                    for (std::size_t j = 0; j < g.kw; ++j) {
                        const T wgt = k[((o * g.c_in + c) * g.kh + i) * g.kw + j];
                        const auto ys = detail::valid_range(i, g.h, g.out_h, g.stride, g.pad);
                        const auto xs = detail::valid_range(j, g.w, g.out_w, g.stride, g.pad);
                        for (std::size_t y = ys.lo; y < ys.hi; ++y)
                            for (std::size_t x = xs.lo; x < xs.hi; ++x)
                                gi[(c * g.h + y * g.stride + i - g.pad) * g.w + x * g.stride + j - g.pad] +=
                                    wgt * go[(o * g.out_h + y) * g.out_w + x];
                    }
    }

    // Kernel gradient: a reduction over output positions for every (o, c, i, j).
    // Partial sums are kept per lane (lane = column mod 8) and combined in lane
    // order, so the summation order is fixed in source, not by the vectorizer.
    const std::size_t hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad;
    const std::vector<T> padded = detail::zero_pad(input.data(), g.c_in, g.h, g.w, g.pad);
    for (std::size_t o = 0; o < g.c_out; ++o) {
        for (std::size_t c = 0; c < g.c_in; ++c) {
            T* dst = r.kernels.data() + (o * g.c_in + c) * g.kh * g.kw;
            const T* go_o = go + o * plane;
            const T* in_c = padded.data() + c * hp * wp;
            if (g.stride == 1 && g.kh == 3 && g.kw == 3 && g.out_w % detail::grad_lanes == 0) {
                detail::kernel_grad_3x3(go_o, in_c, wp, g.out_h, g.out_w, dst);
            } else {
                detail::kernel_grad_generic(go_o, in_c, wp, g.out_h, g.out_w, g.kh, g.kw, g.stride, dst);
            }
        }
    }
    return r;
}

/// Which input element won each pooling window, as flat indices into the input.
struct PoolCache {
    Shape input_dims;
    std::vector<std::size_t> argmax;
};

template <class T>
struct PoolResult {
    BasicTensor<T> output;
    PoolCache cache;
};

/// 2x2 max pooling with stride 2. Ties go to the first element in row-major window order.
template <class T>
PoolResult<T> maxpool2d(const BasicTensor<T>& input) {
    const Shape& d = input.dims();
    if (d.size() != 3) throw DimensionError("maxpool2d: expected [c,h,w], got " + shape_string(d));
    if (d[1] % 2 != 0 || d[2] % 2 != 0) {
        throw DimensionError("maxpool2d: height and width must be even, got " + shape_string(d));
    }
    const std::size_t c = d[0], h = d[1], w = d[2], oh = h / 2, ow = w / 2;
    PoolResult<T> r{BasicTensor<T>({c, oh, ow}), PoolCache{d, std::vector<std::size_t>(c * oh * ow)}};
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                std::size_t best = (ch * h + 2 * y) * w + 2 * x;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = (ch * h + 2 * y + dy) * w + 2 * x + dx;
                        if (input[idx] > input[best]) best = idx;
                    }
                }
                const std::size_t q = (ch * oh + y) * ow + x;
                r.output[q] = input[best];
                r.cache.argmax[q] = best;
            }
        }
    }
    return r;
}

template <class T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_out, const PoolCache& cache) {
    if (grad_out.size() != cache.argmax.size()) {
        throw DimensionError("maxpool2d_backward: grad_out " + shape_string(grad_out.dims()) +
                             " does not match cached pooling of " + shape_string(cache.input_dims));
    }
    BasicTensor<T> gi(cache.input_dims);
    for (std::size_t q = 0; q < cache.argmax.size(); ++q) gi[cache.argmax[q]] += grad_out[q];
    return gi;
}

/// Nearest-neighbour upsampling: output[c, y, x] = input[c, y / factor, x / factor].
template <class T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& input, std::size_t factor = 2) {
    const Shape& d = input.dims();
    if (d.size() != 3) throw DimensionError("upsample_nearest: expected [c,h,w], got " + shape_string(d));
    if (factor == 0) throw DimensionError("upsample_nearest: factor must be >= 1");
    const std::size_t c = d[0], h = d[1], w = d[2], oh = h * factor, ow = w * factor;
    BasicTensor<T> out({c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < oh; ++y) {
            const T* src = input.data() + (ch * h + y / factor) * w;
            T* dst = out.data() + (ch * oh + y) * ow;
            for (std::size_t x = 0; x < ow; ++x) dst[x] = src[x / factor];
        }
    }
    return out;
}

/// Each input cell receives the sum of its factor x factor replicas, row-major.
template <class T>
BasicTensor<T> upsample_nearest_backward(const BasicTensor<T>& grad_out, std::size_t factor = 2) {
    const Shape& d = grad_out.dims();
    if (d.size() != 3 || factor == 0 || d[1] % factor != 0 || d[2] % factor != 0) {
        throw DimensionError("upsample_nearest_backward: grad_out " + shape_string(d) +
                             " not divisible by factor " + std::to_string(factor));
    }
    const std::size_t c = d[0], oh = d[1], ow = d[2], h = oh / factor, w = ow / factor;
    BasicTensor<T> gi({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                T s = T(0);
                for (std::size_t dy = 0; dy < factor; ++dy) {
                    for (std::size_t dx = 0; dx < factor; ++dx) {
                        s += grad_out[(ch * oh + y * factor + dy) * ow + x * factor + dx];
                    }
                }
                gi.at(ch, y, x) = s;
            }
        }
    }
    return gi;
}

template <class T>
struct DenseGrads {
    BasicTensor<T> input;
    BasicTensor<T> weights;
    BasicTensor<T> bias;
};

/// output = weights * input + bias, with weights [m, n].
template <class T>
BasicTensor<T> dense_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias) {
    if (weights.rank() != 2 || weights.dim(1) != input.size() || bias.dims() != Shape{weights.dim(0)}) {
        throw DimensionError("dense: incompatible shapes input " + shape_string(input.dims()) + " weights " +
                             shape_string(weights.dims()) + " bias " + shape_string(bias.dims()));
    }
    const std::size_t m = weights.dim(0), n = weights.dim(1);
    BasicTensor<T> out({m});
    for (std::size_t r = 0; r < m; ++r) {
        T s = T(0);
        for (std::size_t c = 0; c < n; ++c) s += weights[r * n + c] * input[c];
        out[r] = s + bias[r];
    }
    return out;
}

template <class T>
DenseGrads<T> dense_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& input,
                             const BasicTensor<T>& weights) {
    if (weights.rank() != 2 || weights.dim(1) != input.size() || grad_out.dims() != Shape{weights.dim(0)}) {
        throw DimensionError("dense_backward: incompatible shapes grad_out " + shape_string(grad_out.dims()) +
                             " input " + shape_string(input.dims()) + " weights " + shape_string(weights.dims()));
    }
    const std::size_t m = weights.dim(0), n = weights.dim(1);
    DenseGrads<T> g{BasicTensor<T>(input.dims()), BasicTensor<T>(weights.dims()), grad_out};
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            g.weights[r * n + c] = grad_out[r] * input[c];
            g.input[c] += weights[r * n + c] * grad_out[r];
        }
    }
    return g;
}

enum class Activation { relu, sigmoid };

template <class T>
T sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <class T>
BasicTensor<T> activation_forward(const BasicTensor<T>& x, Activation kind) {
    BasicTensor<T> y(x.dims());
    const std::size_t n = x.size();
    if (kind == Activation::relu) {
        for (std::size_t q = 0; q < n; ++q) y[q] = x[q] > T(0) ? x[q] : T(0);
    } else {
        for (std::size_t q = 0; q < n; ++q) y[q] = sigmoid(x[q]);
    }
    return y;
}

/// Gradient w.r.t. the activation input `x`. The relu derivative at exactly 0 is 0.
template <class T>
BasicTensor<T> activation_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& x, Activation kind) {
    require_same_shape(grad_out.dims(), x.dims(), "activation_backward");
    BasicTensor<T> g(x.dims());
    const std::size_t n = x.size();
    if (kind == Activation::relu) {
        for (std::size_t q = 0; q < n; ++q) g[q] = x[q] > T(0) ? grad_out[q] : T(0);
    } else {
        for (std::size_t q = 0; q < n; ++q) {
            const T s = sigmoid(x[q]);
            g[q] = grad_out[q] * s * (T(1) - s);
        }
    }
    return g;
}

} // namespace aecn
