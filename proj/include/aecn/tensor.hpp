#pragma once

#include <aecn/error.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace aecn {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& dims) {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i != 0) s += "x";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

inline std::size_t shape_product(const Shape& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major n-dimensional array.
///
/// The library works in 32-bit floats (`Tensor`); the scalar is a template
/// parameter so that the same kernels can be instantiated in double precision
/// for numerical verification. A default-constructed tensor is empty (rank 0,
/// no data) and only serves as a placeholder; every other tensor has all
/// dims >= 1 and exactly product(dims) elements.
template <class T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape dims, T fill = T(0)) : dims_(std::move(dims)) {
        check_dims();
        data_.assign(shape_product(dims_), fill);
    }

    BasicTensor(Shape dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
        check_dims();
        if (data_.size() != shape_product(dims_)) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(dims_));
        }
    }

    const Shape& dims() const noexcept { return dims_; }
    std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Element of a rank-3 [c, y, x] tensor.
    T& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * dims_[1] + y) * dims_[2] + x]; }
    const T& at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * dims_[1] + y) * dims_[2] + x];
    }

    BasicTensor reshaped(Shape dims) const& { return BasicTensor(std::move(dims), data_); }
    BasicTensor reshaped(Shape dims) && { return BasicTensor(std::move(dims), std::move(data_)); }

    template <class U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(dims_, std::move(out));
    }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.dims_ == b.dims_ && a.data_ == b.data_;
    }

private:
    void check_dims() const {
        for (std::size_t d : dims_) {
            if (d == 0) throw DimensionError("tensor dims must be >= 1, got " + shape_string(dims_));
        }
    }

    Shape dims_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

/// Throws DimensionError naming both shapes unless `a` and `b` have identical dims.
inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    }
}

} // namespace aecn
