#include "ssa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace ssa {

std::string to_string(const Shape4& s) {
    std::ostringstream os;
    os << s;
    return os.str();
}

std::ostream& operator<<(std::ostream& os, const Shape4& s) {
    return os << '(' << s.n << ',' << s.c << ',' << s.h << ',' << s.w << ')';
}

template <typename T>
BasicTensor4<T>::BasicTensor4(Shape4 dims, T fill) : dims_(dims) {
    if (dims.n < 0 || dims.c < 0 || dims.h < 0 || dims.w < 0) {
        throw ShapeError("negative tensor dimension " + to_string(dims));
    }
    data_.assign(dims.numel(), fill);
}

template <typename T>
BasicTensor4<T>::BasicTensor4(Shape4 dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    if (dims.n < 0 || dims.c < 0 || dims.h < 0 || dims.w < 0) {
        throw ShapeError("negative tensor dimension " + to_string(dims));
    }
    if (data_.size() != dims.numel()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match dims " +
                         to_string(dims));
    }
}

template <typename T>
void BasicTensor4<T>::fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
void BasicTensor4<T>::reshape(Shape4 dims) {
    if (dims.numel() != data_.size()) {
        throw ShapeError("cannot reshape " + to_string(dims_) + " to " + to_string(dims));
    }
    dims_ = dims;
}

template <typename T>
bool BasicTensor4<T>::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
bool bitwise_equal(const BasicTensor4<T>& a, const BasicTensor4<T>& b) {
    if (a.dims() != b.dims()) return false;
    return a.size() == 0 || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template <typename T>
void BasicKernel4<T>::validate() const {
    const Shape4& d = weight.dims();
    if (d.h != d.w) throw ConfigError("kernel must be square, got " + to_string(d));
    if (d.h < 1 || d.h % 2 == 0) throw ConfigError("kernel size must be odd and >= 1, got " + to_string(d));
    if (!bias.empty() && static_cast<int>(bias.size()) != d.n) {
        throw ConfigError("bias length " + std::to_string(bias.size()) + " does not match out_c " +
                          std::to_string(d.n));
    }
}

void require_same_dims(const Shape4& a, const Shape4& b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
    }
}

template class BasicTensor4<float>;
template class BasicTensor4<double>;
template struct BasicKernel4<float>;
template struct BasicKernel4<double>;
template bool bitwise_equal(const BasicTensor4<float>&, const BasicTensor4<float>&);
template bool bitwise_equal(const BasicTensor4<double>&, const BasicTensor4<double>&);

}  // namespace ssa
