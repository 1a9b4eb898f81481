#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ssa/errors.hpp"

namespace ssa {

/// Dimensions of a rank-4 (batch, channel, height, width) array.
struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const noexcept {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
               static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }

    friend bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Shape4& s);
std::ostream& operator<<(std::ostream& os, const Shape4& s);

/// Dense row-major (n, c, h, w) array. Value type: copies are deep.
template <typename T>
class BasicTensor4 {
public:
    using value_type = T;

    BasicTensor4() = default;
    explicit BasicTensor4(Shape4 dims, T fill = T(0));
    BasicTensor4(Shape4 dims, std::vector<T> data);
    BasicTensor4(int n, int c, int h, int w, T fill = T(0)) : BasicTensor4(Shape4{n, c, h, w}, fill) {}

    const Shape4& dims() const noexcept { return dims_; }
    int n() const noexcept { return dims_.n; }
    int c() const noexcept { return dims_.c; }
    int h() const noexcept { return dims_.h; }
    int w() const noexcept { return dims_.w; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t index(int in, int ic, int ih, int iw) const noexcept {
        return ((static_cast<std::size_t>(in) * dims_.c + ic) * dims_.h + ih) * dims_.w + iw;
    }
    T& at(int in, int ic, int ih, int iw) noexcept { return data_[index(in, ic, ih, iw)]; }
    T at(int in, int ic, int ih, int iw) const noexcept { return data_[index(in, ic, ih, iw)]; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    T operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    /// Contiguous view of one (h, w) plane.
    std::span<T> plane(int in, int ic) noexcept { return {data_.data() + index(in, ic, 0, 0), dims_.plane()}; }
    std::span<const T> plane(int in, int ic) const noexcept {
        return {data_.data() + index(in, ic, 0, 0), dims_.plane()};
    }

    void fill(T v);
    /// Reinterprets the dims; element count must be preserved.
    void reshape(Shape4 dims);
    bool all_finite() const noexcept;

    template <typename U>
    BasicTensor4<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor4<U>(dims_, std::move(out));
    }

    friend bool operator==(const BasicTensor4&, const BasicTensor4&) = default;

private:
    Shape4 dims_{};
    std::vector<T> data_;
};

using Tensor4 = BasicTensor4<float>;
using Tensor4d = BasicTensor4<double>;

/// Bitwise equality (distinguishes -0.0 from 0.0 and compares NaN payloads).
template <typename T>
bool bitwise_equal(const BasicTensor4<T>& a, const BasicTensor4<T>& b);

/// Convolution weight (out_c, in_c, k, k) with an optional bias of length out_c.
template <typename T>
struct BasicKernel4 {
    BasicTensor4<T> weight;
    std::vector<T> bias;  // empty means "no bias"

    int out_c() const noexcept { return weight.n(); }
    int in_c() const noexcept { return weight.c(); }
    int k() const noexcept { return weight.h(); }

    /// Throws ConfigError unless the weight is square with odd k and the bias length fits.
    void validate() const;
};

using Kernel4 = BasicKernel4<float>;
using Kernel4d = BasicKernel4<double>;

/// Throws ShapeError with both shapes in the message when a != b.
void require_same_dims(const Shape4& a, const Shape4& b, const char* what);

}  // namespace ssa
