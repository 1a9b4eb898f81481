#include "ssa/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace ssa {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Range of output columns j whose source column j*stride + offset lies in [0, in).
void valid_range(int out, int in, int stride, int offset, int& lo, int& hi) {
    lo = 0;
    if (offset < 0) lo = (-offset + stride - 1) / stride;
    hi = out;  // exclusive
    const int last = in - 1 - offset;
    if (last < 0) {
        hi = 0;
    } else {
        hi = std::min(out, last / stride + 1);
    }
    if (hi < lo) hi = lo;
}

}  // namespace

int conv_output_extent(int in, int k, int stride, int padding) {
    if (stride < 1) throw ConfigError("conv stride must be positive, got " + std::to_string(stride));
    if (padding < 0) throw ConfigError("conv padding must be non-negative, got " + std::to_string(padding));
    const int span = in + 2 * padding - k;
    if (span < 0) {
        throw ConfigError("conv output extent is not positive (in=" + std::to_string(in) +
                          ", k=" + std::to_string(k) + ", padding=" + std::to_string(padding) + ")");
    }
    return span / stride + 1;
}

template <typename T>
void conv2d_raw_forward(const BasicTensor4<T>& x, std::span<const T> weight, std::span<const T> bias, int out_c,
                        int k, int stride, int padding, BasicTensor4<T>& out) {
    const int in_c = x.c();
    const int H = x.h();
    const int W = x.w();
    const int oh = conv_output_extent(H, k, stride, padding);
    const int ow = conv_output_extent(W, k, stride, padding);
    out = BasicTensor4<T>(x.n(), out_c, oh, ow);

    // Column bounds per kernel column, shared by every row.
    std::vector<int> jlo(k), jhi(k);
    for (int q = 0; q < k; ++q) valid_range(ow, W, stride, q - padding, jlo[q], jhi[q]);

    // Every output element accumulates bias, then taps in (c, m, q) order.
    for (int b = 0; b < x.n(); ++b) {
        for (int d = 0; d < out_c; ++d) {
            T* o = out.plane(b, d).data();
            std::fill(o, o + static_cast<std::size_t>(oh) * ow, bias.empty() ? T(0) : bias[d]);
            for (int c = 0; c < in_c; ++c) {
                const T* xp = x.plane(b, c).data();
                const T* wk = weight.data() + (static_cast<std::size_t>(d) * in_c + c) * k * k;
                for (int i = 0; i < oh; ++i) {
                    T* __restrict orow = o + static_cast<std::size_t>(i) * ow;
                    for (int m = 0; m < k; ++m) {
                        const int si = i * stride + m - padding;
                        if (si < 0 || si >= H) continue;
                        const T* xr = xp + static_cast<std::size_t>(si) * W;
                        for (int q = 0; q < k; ++q) {
                            const T wv = wk[m * k + q];
                            const int off = q - padding;
                            if (stride == 1) {
                                const T* __restrict src = xr + off;
                                for (int j = jlo[q]; j < jhi[q]; ++j) orow[j] += wv * src[j];
                            } else {
                                for (int j = jlo[q]; j < jhi[q]; ++j) orow[j] += wv * xr[j * stride + off];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_raw_backward(const BasicTensor4<T>& x, std::span<const T> weight, int out_c, int k, int stride,
                         int padding, const BasicTensor4<T>& grad_out, BasicTensor4<T>* grad_x,
                         std::span<T> grad_w, std::span<T> grad_b) {
    const int in_c = x.c();
    const int H = x.h();
    const int W = x.w();
    const int oh = grad_out.h();
    const int ow = grad_out.w();
    const int taps = in_c * k * k;
    const int npix = oh * ow;
    if (grad_x != nullptr && grad_x->dims() != x.dims()) *grad_x = BasicTensor4<T>(x.dims());

    std::vector<int> jlo(k), jhi(k);
    for (int q = 0; q < k; ++q) valid_range(ow, W, stride, q - padding, jlo[q], jhi[q]);

    // im2col: row (c, m, q), column output pixel; out-of-range taps are zero.
    RowMat<T> col(taps, npix);
    Eigen::Map<const RowMat<T>> Wm(weight.data(), out_c, taps);
    for (int b = 0; b < x.n(); ++b) {
        Eigen::Map<const RowMat<T>> G(grad_out.plane(b, 0).data(), out_c, npix);
        if (!grad_b.empty()) {
            for (int d = 0; d < out_c; ++d) grad_b[d] += G.row(d).sum();
        }
        if (!grad_w.empty()) {
            col.setZero();
            for (int c = 0; c < in_c; ++c) {
                const T* xp = x.plane(b, c).data();
                for (int m = 0; m < k; ++m) {
                    for (int q = 0; q < k; ++q) {
                        T* dst = col.row((c * k + m) * k + q).data();
                        const int off = q - padding;
                        for (int i = 0; i < oh; ++i) {
                            const int si = i * stride + m - padding;
                            if (si < 0 || si >= H) continue;
                            const T* xr = xp + static_cast<std::size_t>(si) * W;
                            T* drow = dst + static_cast<std::size_t>(i) * ow;
                            for (int j = jlo[q]; j < jhi[q]; ++j) drow[j] = xr[j * stride + off];
                        }
                    }
                }
            }
            Eigen::Map<RowMat<T>> GW(grad_w.data(), out_c, taps);
            GW.noalias() += G * col.transpose();
        }
        if (grad_x != nullptr) {
            RowMat<T> gcol = Wm.transpose() * G;
            for (int c = 0; c < in_c; ++c) {
                T* gx = grad_x->plane(b, c).data();
                for (int m = 0; m < k; ++m) {
                    for (int q = 0; q < k; ++q) {
                        const T* srow = gcol.row((c * k + m) * k + q).data();
                        const int off = q - padding;
                        for (int i = 0; i < oh; ++i) {
                            const int si = i * stride + m - padding;
                            if (si < 0 || si >= H) continue;
                            T* gxr = gx + static_cast<std::size_t>(si) * W;
                            const T* s = srow + static_cast<std::size_t>(i) * ow;
                            for (int j = jlo[q]; j < jhi[q]; ++j) gxr[j * stride + off] += s[j];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
BasicTensor4<T> conv2d_forward(const BasicTensor4<T>& x, const BasicKernel4<T>& kernel, int stride, int padding,
                               Conv2dContext<T>* ctx) {
    kernel.validate();
    if (x.c() != kernel.in_c()) {
        throw ShapeError("conv2d: input " + to_string(x.dims()) + " does not match kernel " +
                         to_string(kernel.weight.dims()));
    }
    BasicTensor4<T> out;
    conv2d_raw_forward<T>(x, kernel.weight.values(), kernel.bias, kernel.out_c(), kernel.k(), stride, padding, out);
    if (ctx != nullptr) {
        ctx->input = x;
        ctx->kernel = kernel;
        ctx->stride = stride;
        ctx->padding = padding;
        ctx->valid = true;
    }
    return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor4<T>& grad_out, const Conv2dContext<T>& ctx) {
    if (!ctx.valid) throw StateError("conv2d_backward: no saved forward context");
    const int oh = conv_output_extent(ctx.input.h(), ctx.kernel.k(), ctx.stride, ctx.padding);
    const int ow = conv_output_extent(ctx.input.w(), ctx.kernel.k(), ctx.stride, ctx.padding);
    require_same_dims(grad_out.dims(), Shape4{ctx.input.n(), ctx.kernel.out_c(), oh, ow}, "conv2d_backward");
    Conv2dGrads<T> g;
    g.grad_x = BasicTensor4<T>(ctx.input.dims());
    g.grad_kernel.weight = BasicTensor4<T>(ctx.kernel.weight.dims());
    g.grad_kernel.bias.assign(ctx.kernel.bias.size(), T(0));
    conv2d_raw_backward<T>(ctx.input, ctx.kernel.weight.values(), ctx.kernel.out_c(), ctx.kernel.k(), ctx.stride,
                           ctx.padding, grad_out, &g.grad_x, g.grad_kernel.weight.values(), g.grad_kernel.bias);
    return g;
}

template <typename T>
BasicTensor4<T> linear_forward(const BasicTensor4<T>& x, const BasicTensor4<T>& weight, std::span<const T> bias) {
    const int rows = x.n();
    const int in = x.c() * x.h() * x.w();
    const int out = weight.n();
    if (weight.c() * weight.h() * weight.w() != in) {
        throw ShapeError("linear: input " + to_string(x.dims()) + " does not match weight " +
                         to_string(weight.dims()));
    }
    if (!bias.empty() && static_cast<int>(bias.size()) != out) {
        throw ShapeError("linear: bias length " + std::to_string(bias.size()) + " does not match " +
                         std::to_string(out) + " outputs");
    }
    BasicTensor4<T> y(rows, out, 1, 1);
    Eigen::Map<const RowMat<T>> X(x.data(), rows, in);
    Eigen::Map<const RowMat<T>> Wm(weight.data(), out, in);
    Eigen::Map<RowMat<T>> Y(y.data(), rows, out);
    Y.noalias() = X * Wm.transpose();
    if (!bias.empty()) {
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> B(bias.data(), out);
        Y.rowwise() += B;
    }
    return y;
}

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor4<T>& grad_out, const BasicTensor4<T>& x,
                               const BasicTensor4<T>& weight) {
    const int rows = x.n();
    const int in = x.c() * x.h() * x.w();
    const int out = weight.n();
    require_same_dims(grad_out.dims(), Shape4{rows, out, 1, 1}, "linear_backward");
    LinearGrads<T> g;
    g.grad_x = BasicTensor4<T>(x.dims());
    g.grad_w = BasicTensor4<T>(weight.dims());
    g.grad_b.assign(out, T(0));
    Eigen::Map<const RowMat<T>> X(x.data(), rows, in);
    Eigen::Map<const RowMat<T>> Wm(weight.data(), out, in);
    Eigen::Map<const RowMat<T>> G(grad_out.data(), rows, out);
    Eigen::Map<RowMat<T>>(g.grad_x.data(), rows, in).noalias() = G * Wm;
    Eigen::Map<RowMat<T>>(g.grad_w.data(), out, in).noalias() = G.transpose() * X;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.grad_b.data(), out) = G.colwise().sum();
    return g;
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
    if (logits.empty()) throw ArgumentError("softmax of an empty vector");
    const T mx = *std::max_element(logits.begin(), logits.end());
    std::vector<T> out(logits.size());
    T sum = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (T& v : out) v /= sum;
    return out;
}

double keys_cubic(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    const double centre = 0.5 * (size - 1);
    double sum = 0;
    for (int i = 0; i < size; ++i) {
        const double d = i - centre;
        w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

namespace {

// One output sample of 1-D cubic resampling: base index plus four tap
// weights for positions base-1 .. base+2.
struct CubicTap {
    int base = 0;
    double weight[4] = {0, 0, 0, 0};
};

std::vector<CubicTap> cubic_plan(int in, int out) {
    std::vector<CubicTap> plan(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
        double src = 0.0;
        if (in > 1 && out > 1) src = static_cast<double>(o) * (in - 1) / static_cast<double>(out - 1);
        int base = static_cast<int>(std::floor(src));
        base = std::clamp(base, 0, in - 1);
        const double t = src - base;
        CubicTap& tap = plan[o];
        tap.base = base;
        tap.weight[0] = keys_cubic(1.0 + t);
        tap.weight[1] = keys_cubic(t);
        tap.weight[2] = keys_cubic(1.0 - t);
        tap.weight[3] = keys_cubic(2.0 - t);
    }
    return plan;
}

// Value at integer position `pos` of a 1-D signal with linear extrapolation
// past both ends. `at(i)` reads sample i.
template <typename T, typename Read>
T extended_sample(int pos, int in, const Read& at) {
    if (pos >= 0 && pos < in) return at(pos);
    if (in == 1) return at(0);
    if (pos < 0) {
        const T d = at(0) - at(1);
        return at(0) + static_cast<T>(-pos) * d;
    }
    const T d = at(in - 1) - at(in - 2);
    return at(in - 1) + static_cast<T>(pos - (in - 1)) * d;
}

// Adjoint of extended_sample: distributes g over the real samples.
template <typename T, typename Write>
void extended_scatter(int pos, int in, T g, const Write& add) {
    if (pos >= 0 && pos < in) {
        add(pos, g);
    } else if (in == 1) {
        add(0, g);
    } else if (pos < 0) {
        const T k = static_cast<T>(-pos);
        add(0, g * (T(1) + k));
        add(1, -g * k);
    } else {
        const T k = static_cast<T>(pos - (in - 1));
        add(in - 1, g * (T(1) + k));
        add(in - 2, -g * k);
    }
}

// Resample a strided 1-D line. out = x_base + sum_k w_k (x_k - x_base).
template <typename T>
void resample_line(const T* src, std::size_t src_stride, int in, T* dst, std::size_t dst_stride,
                   const std::vector<CubicTap>& plan) {
    auto at = [&](int i) { return src[static_cast<std::size_t>(i) * src_stride]; };
    for (std::size_t o = 0; o < plan.size(); ++o) {
        const CubicTap& tap = plan[o];
        const T xb = at(tap.base);
        T acc = xb;
        for (int k = 0; k < 4; ++k) {
            const T v = extended_sample<T>(tap.base - 1 + k, in, at);
            acc += static_cast<T>(tap.weight[k]) * (v - xb);
        }
        dst[o * dst_stride] = acc;
    }
}

template <typename T>
void resample_line_adjoint(const T* g, std::size_t g_stride, int in, T* dst, std::size_t dst_stride,
                           const std::vector<CubicTap>& plan) {
    auto add = [&](int i, T v) { dst[static_cast<std::size_t>(i) * dst_stride] += v; };
    for (std::size_t o = 0; o < plan.size(); ++o) {
        const CubicTap& tap = plan[o];
        const T go = g[o * g_stride];
        for (int k = 0; k < 4; ++k) {
            extended_scatter<T>(tap.base - 1 + k, in, static_cast<T>(tap.weight[k]) * go, add);
        }
    }
}

}  // namespace

template <typename T>
BasicTensor4<T> bicubic_resize(const BasicTensor4<T>& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) {
        throw ArgumentError("bicubic_resize: target dims must be positive, got " + std::to_string(out_h) + "x" +
                            std::to_string(out_w));
    }
    if (x.h() < 1 || x.w() < 1) throw ArgumentError("bicubic_resize: empty input " + to_string(x.dims()));
    const auto plan_w = cubic_plan(x.w(), out_w);
    const auto plan_h = cubic_plan(x.h(), out_h);
    BasicTensor4<T> tmp(x.n(), x.c(), x.h(), out_w);
    BasicTensor4<T> out(x.n(), x.c(), out_h, out_w);
    for (int b = 0; b < x.n(); ++b) {
        for (int c = 0; c < x.c(); ++c) {
            const T* xp = x.plane(b, c).data();
            T* tp = tmp.plane(b, c).data();
            for (int i = 0; i < x.h(); ++i) {
                resample_line(xp + static_cast<std::size_t>(i) * x.w(), 1, x.w(), tp + static_cast<std::size_t>(i) * out_w,
                              1, plan_w);
            }
            T* op = out.plane(b, c).data();
            for (int j = 0; j < out_w; ++j) {
                resample_line(tp + j, static_cast<std::size_t>(out_w), x.h(), op + j, static_cast<std::size_t>(out_w),
                              plan_h);
            }
        }
    }
    return out;
}

template <typename T>
BasicTensor4<T> bicubic_resize_backward(const BasicTensor4<T>& grad_out, int in_h, int in_w) {
    const int out_h = grad_out.h();
    const int out_w = grad_out.w();
    const auto plan_w = cubic_plan(in_w, out_w);
    const auto plan_h = cubic_plan(in_h, out_h);
    BasicTensor4<T> tmp(grad_out.n(), grad_out.c(), in_h, out_w);
    BasicTensor4<T> gx(grad_out.n(), grad_out.c(), in_h, in_w);
    for (int b = 0; b < grad_out.n(); ++b) {
        for (int c = 0; c < grad_out.c(); ++c) {
            const T* gp = grad_out.plane(b, c).data();
            T* tp = tmp.plane(b, c).data();
            for (int j = 0; j < out_w; ++j) {
                resample_line_adjoint(gp + j, static_cast<std::size_t>(out_w), in_h, tp + j,
                                      static_cast<std::size_t>(out_w), plan_h);
            }
            T* xp = gx.plane(b, c).data();
            for (int i = 0; i < in_h; ++i) {
                resample_line_adjoint(tp + static_cast<std::size_t>(i) * out_w, 1, in_w,
                                      xp + static_cast<std::size_t>(i) * in_w, 1, plan_w);
            }
        }
    }
    return gx;
}

#define SSA_INSTANTIATE_KERNELS(T)                                                                                  \
    template BasicTensor4<T> conv2d_forward(const BasicTensor4<T>&, const BasicKernel4<T>&, int, int,              \
                                            Conv2dContext<T>*);                                                     \
    template Conv2dGrads<T> conv2d_backward(const BasicTensor4<T>&, const Conv2dContext<T>&);                      \
    template void conv2d_raw_forward(const BasicTensor4<T>&, std::span<const T>, std::span<const T>, int, int, int, \
                                     int, BasicTensor4<T>&);                                                        \
    template void conv2d_raw_backward(const BasicTensor4<T>&, std::span<const T>, int, int, int, int,              \
                                      const BasicTensor4<T>&, BasicTensor4<T>*, std::span<T>, std::span<T>);       \
    template BasicTensor4<T> linear_forward(const BasicTensor4<T>&, const BasicTensor4<T>&, std::span<const T>);   \
    template LinearGrads<T> linear_backward(const BasicTensor4<T>&, const BasicTensor4<T>&, const BasicTensor4<T>&); \
    template std::vector<T> softmax(std::span<const T>);                                                            \
    template BasicTensor4<T> bicubic_resize(const BasicTensor4<T>&, int, int);                                     \
    template BasicTensor4<T> bicubic_resize_backward(const BasicTensor4<T>&, int, int);

SSA_INSTANTIATE_KERNELS(float)
SSA_INSTANTIATE_KERNELS(double)

}  // namespace ssa
