#pragma once

// Forward/backward numeric kernels on plain tensors. The differentiable graph
// ops in graph_ops.hpp are thin wrappers around these.

#include <span>
#include <vector>

#include "ssa/tensor.hpp"

namespace ssa {

/// Saved forward state needed by conv2d_backward.
template <typename T>
struct Conv2dContext {
    BasicTensor4<T> input;
    BasicKernel4<T> kernel;
    int stride = 1;
    int padding = 0;
    bool valid = false;
};

template <typename T>
struct Conv2dGrads {
    BasicTensor4<T> grad_x;
    BasicKernel4<T> grad_kernel;  // grad_kernel.bias holds grad_b (empty if the kernel had no bias)
};

/// Direct 2-D cross-correlation. Each output accumulates bias first, then
/// taps in (channel, kernel row, kernel column) order; out-of-range taps
/// contribute nothing. When `ctx` is non-null the inputs are saved into it.
template <typename T>
BasicTensor4<T> conv2d_forward(const BasicTensor4<T>& x, const BasicKernel4<T>& kernel, int stride, int padding,
                               Conv2dContext<T>* ctx = nullptr);

/// Gradients of conv2d_forward w.r.t. input, weight and bias.
template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor4<T>& grad_out, const Conv2dContext<T>& ctx);

/// Output spatial extent of a convolution; throws ConfigError when not positive.
int conv_output_extent(int in, int k, int stride, int padding);

// Raw conv kernels over contiguous buffers. `weight` is (out_c, in_c, k, k),
// `bias` may be empty. Used by both the plain and the graph API.
template <typename T>
void conv2d_raw_forward(const BasicTensor4<T>& x, std::span<const T> weight, std::span<const T> bias, int out_c,
                        int k, int stride, int padding, BasicTensor4<T>& out);
template <typename T>
void conv2d_raw_backward(const BasicTensor4<T>& x, std::span<const T> weight, int out_c, int k, int stride,
                         int padding, const BasicTensor4<T>& grad_out, BasicTensor4<T>* grad_x,
                         std::span<T> grad_w, std::span<T> grad_b);

/// Affine map y = x W^T + b over the rows of x. x is (rows, in, 1, 1), W is (out, in, 1, 1).
template <typename T>
BasicTensor4<T> linear_forward(const BasicTensor4<T>& x, const BasicTensor4<T>& weight, std::span<const T> bias);

template <typename T>
struct LinearGrads {
    BasicTensor4<T> grad_x;
    BasicTensor4<T> grad_w;
    std::vector<T> grad_b;
};

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor4<T>& grad_out, const BasicTensor4<T>& x,
                               const BasicTensor4<T>& weight);

/// Numerically stable softmax (max-subtracted). Throws ArgumentError on an empty vector.
template <typename T>
std::vector<T> softmax(std::span<const T> logits);

/// Separable Keys cubic (a = -0.5) resampling with corner-aligned sampling
/// positions. Samples beyond the border are linearly extrapolated from the
/// two nearest edge samples, so constant and linear signals are reproduced.
template <typename T>
BasicTensor4<T> bicubic_resize(const BasicTensor4<T>& x, int out_h, int out_w);

/// Adjoint of bicubic_resize: maps a gradient at (out_h, out_w) back to (in_h, in_w).
template <typename T>
BasicTensor4<T> bicubic_resize_backward(const BasicTensor4<T>& grad_out, int in_h, int in_w);

/// Keys cubic convolution weight, a = -0.5.
double keys_cubic(double t);

/// 1-D normalized Gaussian window of the given size centred at (size-1)/2.
std::vector<double> gaussian_window(int size, double sigma);

}  // namespace ssa
