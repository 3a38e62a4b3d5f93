#pragma once

// Shared test helpers: scratch directories, random tensors and the reference
// oracles the optimized code is checked against.

#include <aecn/anomaly.hpp>
#include <aecn/kernels.hpp>
#include <aecn/rng.hpp>
#include <aecn/tensor.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace aecn::testing {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("aecn-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

template <class T>
BasicTensor<T> random_tensor(const Shape& dims, SeededRng& rng, double lo = -1.0, double hi = 1.0) {
    BasicTensor<T> t(dims);
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

/// Six-loop convolution. Out-of-range taps contribute 0 * w, summed in the
/// same (c, i, j) order as the documented definition, with the bias added last.
template <class T>
BasicTensor<T> naive_conv(const BasicTensor<T>& in, const BasicTensor<T>& k, const BasicTensor<T>& bias,
                          std::size_t stride, std::size_t pad) {
    const std::size_t c_in = in.dim(0), h = in.dim(1), w = in.dim(2);
    const std::size_t c_out = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
    BasicTensor<T> out({c_out, oh, ow});
    for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                T acc = T(0);
                for (std::size_t c = 0; c < c_in; ++c)
                    for (std::size_t i = 0; i < kh; ++i)
                        for (std::size_t j = 0; j < kw; ++j) {
                            const long yy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
                            const long xx = static_cast<long>(x * stride + j) - static_cast<long>(pad);
                            const bool inside = yy >= 0 && xx >= 0 && yy < static_cast<long>(h) && xx < static_cast<long>(w);
                            const T v = inside ? in.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) : T(0);
                            acc += k[((o * c_in + c) * kh + i) * kw + j] * v;
                        }
                out.at(o, y, x) = acc + bias[o];
            }
    return out;
}

/// 2x2/stride-2 max pool by brute force; first maximum in row-major window order wins.
template <class T>
BasicTensor<T> naive_maxpool(const BasicTensor<T>& in) {
    BasicTensor<T> out({in.dim(0), in.dim(1) / 2, in.dim(2) / 2});
    for (std::size_t c = 0; c < out.dim(0); ++c)
        for (std::size_t y = 0; y < out.dim(1); ++y)
            for (std::size_t x = 0; x < out.dim(2); ++x) {
                T m = in.at(c, 2 * y, 2 * x);
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) m = std::max(m, in.at(c, 2 * y + dy, 2 * x + dx));
                out.at(c, y, x) = m;
            }
    return out;
}

template <class T>
struct ConvCase {
    BasicTensor<T> input;
    BasicConvParams<T> params;
};

/// A random valid convolution problem: 1-4 input channels, 1-19 output
/// channels (so both the 8-wide register tiles and the remainder paths run),
/// kernels 1-5, stride 1-3, padding up to the kernel extent.
template <class T>
ConvCase<T> random_conv_case(std::uint64_t seed) {
    SeededRng rng = SeededRng::derive(seed, {0xCC});
    for (;;) {
        const std::size_t c_in = 1 + rng.below(4), c_out = 1 + rng.below(19);
        const std::size_t kh = 1 + rng.below(5), kw = 1 + rng.below(5);
        const std::size_t stride = rng.bernoulli(0.6) ? 1 : 2 + rng.below(2);
        const std::size_t pad = rng.below(std::min(kh, kw) + 1);
        const std::size_t oh = 1 + rng.below(20), ow = 1 + rng.below(28);
        const long h = static_cast<long>((oh - 1) * stride + kh) - 2 * static_cast<long>(pad);
        const long w = static_cast<long>((ow - 1) * stride + kw) - 2 * static_cast<long>(pad);
        if (h < 1 || w < 1) continue;
        ConvCase<T> c;
        c.input = random_tensor<T>({c_in, static_cast<std::size_t>(h), static_cast<std::size_t>(w)}, rng);
        c.params = {random_tensor<T>({c_out, c_in, kh, kw}, rng), random_tensor<T>({c_out}, rng), stride, pad};
        return c;
    }
}

/// Pairwise Mann-Whitney estimate of P(score_anomalous > score_normal), ties 0.5.
inline double mann_whitney_auc(const std::vector<ScoreRecord>& s) {
    double wins = 0.0;
    std::size_t pos = 0, neg = 0;
    for (const auto& a : s) {
        if (a.label != Label::anomalous) continue;
        ++pos;
        for (const auto& n : s) {
            if (n.label != Label::normal) continue;
            wins += a.error > n.error ? 1.0 : (a.error == n.error ? 0.5 : 0.0);
        }
    }
    for (const auto& n : s) neg += n.label == Label::normal;
    return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Smallest sample value v with #{x <= v} >= p * n: the lower order statistic
/// found by counting rather than by indexing a sorted copy.
inline float counting_percentile(const std::vector<float>& xs, double p) {
    const double need = p * static_cast<double>(xs.size());
    float best = *std::max_element(xs.begin(), xs.end());
    for (float v : xs) {
        const auto le = std::count_if(xs.begin(), xs.end(), [v](float x) { return x <= v; });
        if (static_cast<double>(le) >= need - 1e-9 && v < best) best = v;
    }
    return best;
}

} // namespace aecn::testing
