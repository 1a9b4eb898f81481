#include "ssa/graph_ops.hpp"

#include <algorithm>
#include <cmath>

namespace ssa::ops {

namespace {

template <typename T>
void require_same(const Tape<T>& tape, Var a, Var b, const char* what) {
    require_same_dims(tape.value(a).dims(), tape.value(b).dims(), what);
}

template <typename T>
void add_into(BasicTensor4<T>& dst, const BasicTensor4<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var weight, Var bias, int stride, int padding) {
    const auto& xv = tape.value(x);
    const auto& wv = tape.value(weight);
    const Shape4 wd = wv.dims();
    if (wd.h != wd.w || wd.h % 2 == 0) throw ConfigError("conv2d: kernel must be square with odd k, got " + to_string(wd));
    if (xv.c() != wd.c) {
        throw ShapeError("conv2d: input " + to_string(xv.dims()) + " does not match kernel " + to_string(wd));
    }
    std::span<const T> bspan;
    if (bias.valid()) {
        const auto& bv = tape.value(bias);
        if (static_cast<int>(bv.size()) != wd.n) {
            throw ShapeError("conv2d: bias " + to_string(bv.dims()) + " does not match kernel " + to_string(wd));
        }
        bspan = bv.values();
    }
    BasicTensor4<T> out;
    conv2d_raw_forward<T>(xv, wv.values(), bspan, wd.n, wd.h, stride, padding, out);
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(out), {x, weight, bias}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        BasicTensor4<T>* gx = t.requires_grad(x) ? &t.grad_buffer(x) : nullptr;
        std::span<T> gw;
        if (t.requires_grad(weight)) gw = t.grad_buffer(weight).values();
        std::span<T> gb;
        if (bias.valid() && t.requires_grad(bias)) gb = t.grad_buffer(bias).values();
        conv2d_raw_backward<T>(t.value(x), t.value(weight).values(), wd.n, wd.h, stride, padding, g, gx, gw, gb);
    });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias) {
    const auto& bv = tape.value(bias);
    BasicTensor4<T> y = linear_forward<T>(tape.value(x), tape.value(weight), bv.values());
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {x, weight, bias}, [=](Tape<T>& t) {
        auto g = linear_backward<T>(t.grad(self), t.value(x), t.value(weight));
        if (t.requires_grad(x)) add_into(t.grad_buffer(x), g.grad_x);
        if (t.requires_grad(weight)) add_into(t.grad_buffer(weight), g.grad_w);
        if (t.requires_grad(bias)) {
            auto& gb = t.grad_buffer(bias);
            for (std::size_t i = 0; i < g.grad_b.size(); ++i) gb[i] += g.grad_b[i];
        }
    });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
    BasicTensor4<T> y = tape.value(x);
    for (T& v : y.values()) v = v > T(0) ? v : T(0);
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {x}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        const auto& xv = t.value(x);
        auto& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xv[i] > T(0)) gx[i] += g[i];
        }
    });
}

template <typename T>
Var abs(Tape<T>& tape, Var x) {
    BasicTensor4<T> y = tape.value(x);
    for (T& v : y.values()) v = std::abs(v);
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {x}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        const auto& xv = t.value(x);
        auto& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xv[i] > T(0)) {
                gx[i] += g[i];
            } else if (xv[i] < T(0)) {
                gx[i] -= g[i];
            }
        }
    });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
    require_same(tape, a, b, "add");
    BasicTensor4<T> y = tape.value(a);
    add_into(y, tape.value(b));
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {a, b}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        if (t.requires_grad(a)) add_into(t.grad_buffer(a), g);
        if (t.requires_grad(b)) add_into(t.grad_buffer(b), g);
    });
}

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) {
    require_same(tape, a, b, "sub");
    BasicTensor4<T> y = tape.value(a);
    const auto& bv = tape.value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {a, b}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        if (t.requires_grad(a)) add_into(t.grad_buffer(a), g);
        if (t.requires_grad(b)) {
            auto& gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
    require_same(tape, a, b, "mul");
    BasicTensor4<T> y = tape.value(a);
    const auto& bv = tape.value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {a, b}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        const auto& av = t.value(a);
        const auto& bv2 = t.value(b);
        if (t.requires_grad(a)) {
            auto& ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
        }
        if (t.requires_grad(b)) {
            auto& gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

template <typename T>
Var div(Tape<T>& tape, Var a, Var b) {
    require_same(tape, a, b, "div");
    BasicTensor4<T> y = tape.value(a);
    const auto& bv = tape.value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] /= bv[i];
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {a, b}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        const auto& yv = t.value(self);
        const auto& bv2 = t.value(b);
        if (t.requires_grad(a)) {
            auto& ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv2[i];
        }
        if (t.requires_grad(b)) {
            auto& gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * yv[i] / bv2[i];
        }
    });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T s) {
    BasicTensor4<T> y = tape.value(x);
    for (T& v : y.values()) v *= s;
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {x}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        auto& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
    });
}

template <typename T>
Var add_scalar(Tape<T>& tape, Var x, T s) {
    BasicTensor4<T> y = tape.value(x);
    for (T& v : y.values()) v += s;
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {x}, [=](Tape<T>& t) { add_into(t.grad_buffer(x), t.grad(self)); });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape4 dims) {
    BasicTensor4<T> y = tape.value(x);
    y.reshape(dims);
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {x}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        auto& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

template <typename T>
Var mean(Tape<T>& tape, Var x) {
    const auto& xv = tape.value(x);
    if (xv.size() == 0) throw ArgumentError("mean of an empty tensor");
    double acc = 0;
    for (T v : xv.values()) acc += v;
    const std::size_t count = xv.size();
    BasicTensor4<T> y(1, 1, 1, 1, static_cast<T>(acc / static_cast<double>(count)));
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {x}, [=](Tape<T>& t) {
        const T g = t.grad(self)[0] / static_cast<T>(count);
        auto& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
}

template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b) {
    const auto& av = tape.value(a);
    const auto& bv = tape.value(b);
    if (av.n() != bv.n() || av.h() != bv.h() || av.w() != bv.w()) {
        throw ShapeError("concat_channels: " + to_string(av.dims()) + " vs " + to_string(bv.dims()));
    }
    const int ca = av.c();
    const int cb = bv.c();
    BasicTensor4<T> y(av.n(), ca + cb, av.h(), av.w());
    const std::size_t plane = av.dims().plane();
    for (int n = 0; n < av.n(); ++n) {
        std::copy_n(av.plane(n, 0).data(), plane * ca, y.plane(n, 0).data());
        std::copy_n(bv.plane(n, 0).data(), plane * cb, y.plane(n, ca).data());
    }
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {a, b}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        for (int n = 0; n < g.n(); ++n) {
            if (t.requires_grad(a)) {
                T* ga = t.grad_buffer(a).plane(n, 0).data();
                const T* src = g.plane(n, 0).data();
                for (std::size_t i = 0; i < plane * ca; ++i) ga[i] += src[i];
            }
            if (t.requires_grad(b)) {
                T* gb = t.grad_buffer(b).plane(n, 0).data();
                const T* src = g.plane(n, ca).data();
                for (std::size_t i = 0; i < plane * cb; ++i) gb[i] += src[i];
            }
        }
    });
}

template <typename T>
Var bicubic_resize(Tape<T>& tape, Var x, int out_h, int out_w) {
    const auto& xv = tape.value(x);
    const int in_h = xv.h();
    const int in_w = xv.w();
    BasicTensor4<T> y = ssa::bicubic_resize(xv, out_h, out_w);
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {x}, [=](Tape<T>& t) {
        add_into(t.grad_buffer(x), bicubic_resize_backward(t.grad(self), in_h, in_w));
    });
}

template <typename T>
Var softmax_rows(Tape<T>& tape, Var x) {
    const auto& xv = tape.value(x);
    const int rows = xv.n();
    const int k = xv.c() * xv.h() * xv.w();
    if (k < 1) throw ArgumentError("softmax_rows: empty rows");
    BasicTensor4<T> y(xv.dims());
    for (int r = 0; r < rows; ++r) {
        auto p = softmax<T>(std::span<const T>(xv.data() + static_cast<std::size_t>(r) * k, static_cast<std::size_t>(k)));
        std::copy(p.begin(), p.end(), y.data() + static_cast<std::size_t>(r) * k);
    }
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {x}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        const auto& yv = t.value(self);
        auto& gx = t.grad_buffer(x);
        for (int r = 0; r < rows; ++r) {
            const std::size_t base = static_cast<std::size_t>(r) * k;
            T dot = 0;
            for (int i = 0; i < k; ++i) dot += g[base + i] * yv[base + i];
            for (int i = 0; i < k; ++i) gx[base + i] += yv[base + i] * (g[base + i] - dot);
        }
    });
}

template <typename T>
Var group_weighted_sum(Tape<T>& tape, Var candidates, Var weights) {
    const auto& cv = tape.value(candidates);
    const auto& wv = tape.value(weights);
    const int rows = wv.n();
    const int k = wv.c() * wv.h() * wv.w();
    const int d = cv.c() * cv.h() * cv.w();
    if (cv.n() != rows * k) {
        throw ShapeError("group_weighted_sum: candidates " + to_string(cv.dims()) + " vs weights " +
                         to_string(wv.dims()));
    }
    BasicTensor4<T> y(rows, d, 1, 1);
    for (int r = 0; r < rows; ++r) {
        T* out = y.data() + static_cast<std::size_t>(r) * d;
        for (int i = 0; i < k; ++i) {
            const T w = wv[static_cast<std::size_t>(r) * k + i];
            const T* c = cv.data() + (static_cast<std::size_t>(r) * k + i) * d;
            for (int j = 0; j < d; ++j) out[j] += w * c[j];
        }
    }
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {candidates, weights}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        const auto& cv2 = t.value(candidates);
        const auto& wv2 = t.value(weights);
        const bool need_c = t.requires_grad(candidates);
        const bool need_w = t.requires_grad(weights);
        for (int r = 0; r < rows; ++r) {
            const T* go = g.data() + static_cast<std::size_t>(r) * d;
            for (int i = 0; i < k; ++i) {
                const std::size_t ci = (static_cast<std::size_t>(r) * k + i) * d;
                if (need_c) {
                    T* gc = t.grad_buffer(candidates).data() + ci;
                    const T w = wv2[static_cast<std::size_t>(r) * k + i];
                    for (int j = 0; j < d; ++j) gc[j] += w * go[j];
                }
                if (need_w) {
                    T acc = 0;
                    for (int j = 0; j < d; ++j) acc += go[j] * cv2[ci + j];
                    t.grad_buffer(weights)[static_cast<std::size_t>(r) * k + i] += acc;
                }
            }
        }
    });
}

template <typename T>
Var rows_to_map(Tape<T>& tape, Var rows, int height, int width) {
    const auto& rv = tape.value(rows);
    const int d = rv.c() * rv.h() * rv.w();
    if (rv.n() != height * width) {
        throw ShapeError("rows_to_map: " + to_string(rv.dims()) + " rows vs " + std::to_string(height) + "x" +
                         std::to_string(width) + " map");
    }
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    BasicTensor4<T> y(1, d, height, width);
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < d; ++c) y[static_cast<std::size_t>(c) * plane + p] = rv[p * d + c];
    }
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {rows}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        auto& gr = t.grad_buffer(rows);
        for (std::size_t p = 0; p < plane; ++p) {
            for (int c = 0; c < d; ++c) gr[p * d + c] += g[static_cast<std::size_t>(c) * plane + p];
        }
    });
}

template <typename T>
Var window_filter_valid(Tape<T>& tape, Var x, const std::vector<double>& window) {
    const auto& xv = tape.value(x);
    const int L = static_cast<int>(window.size());
    if (L < 1 || L > xv.h() || L > xv.w()) {
        throw ArgumentError("window_filter_valid: window " + std::to_string(L) + " does not fit " +
                            to_string(xv.dims()));
    }
    const int H = xv.h();
    const int W = xv.w();
    const int oh = H - L + 1;
    const int ow = W - L + 1;
    std::vector<T> win(window.begin(), window.end());
    BasicTensor4<T> y(xv.n(), xv.c(), oh, ow);
    std::vector<T> tmp(static_cast<std::size_t>(H) * ow);
    for (int n = 0; n < xv.n(); ++n) {
        for (int c = 0; c < xv.c(); ++c) {
            const T* src = xv.plane(n, c).data();
            for (int i = 0; i < H; ++i) {
                for (int j = 0; j < ow; ++j) {
                    T acc = 0;
                    for (int q = 0; q < L; ++q) acc += win[q] * src[static_cast<std::size_t>(i) * W + j + q];
                    tmp[static_cast<std::size_t>(i) * ow + j] = acc;
                }
            }
            T* dst = y.plane(n, c).data();
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    T acc = 0;
                    for (int m = 0; m < L; ++m) acc += win[m] * tmp[static_cast<std::size_t>(i + m) * ow + j];
                    dst[static_cast<std::size_t>(i) * ow + j] = acc;
                }
            }
        }
    }
    Var self{static_cast<std::int32_t>(tape.size())};
    return tape.record(std::move(y), {x}, [=](Tape<T>& t) {
        const auto& g = t.grad(self);
        auto& gx = t.grad_buffer(x);
        std::vector<T> gtmp(static_cast<std::size_t>(H) * ow);
        for (int n = 0; n < g.n(); ++n) {
            for (int c = 0; c < g.c(); ++c) {
                std::fill(gtmp.begin(), gtmp.end(), T(0));
                const T* gp = g.plane(n, c).data();
                for (int i = 0; i < oh; ++i) {
                    for (int j = 0; j < ow; ++j) {
                        const T gv = gp[static_cast<std::size_t>(i) * ow + j];
                        for (int m = 0; m < L; ++m) gtmp[static_cast<std::size_t>(i + m) * ow + j] += win[m] * gv;
                    }
                }
                T* gxp = gx.plane(n, c).data();
                for (int i = 0; i < H; ++i) {
                    for (int j = 0; j < ow; ++j) {
                        const T gv = gtmp[static_cast<std::size_t>(i) * ow + j];
                        for (int q = 0; q < L; ++q) gxp[static_cast<std::size_t>(i) * W + j + q] += win[q] * gv;
                    }
                }
            }
        }
    });
}

#define SSA_INSTANTIATE_GRAPH_OPS(T)                                                     \
    template Var conv2d(Tape<T>&, Var, Var, Var, int, int);                             \
    template Var linear(Tape<T>&, Var, Var, Var);                                       \
    template Var relu(Tape<T>&, Var);                                                   \
    template Var abs(Tape<T>&, Var);                                                    \
    template Var add(Tape<T>&, Var, Var);                                               \
    template Var sub(Tape<T>&, Var, Var);                                               \
    template Var mul(Tape<T>&, Var, Var);                                               \
    template Var div(Tape<T>&, Var, Var);                                               \
    template Var scale(Tape<T>&, Var, T);                                               \
    template Var add_scalar(Tape<T>&, Var, T);                                          \
    template Var reshape(Tape<T>&, Var, Shape4);                                        \
    template Var mean(Tape<T>&, Var);                                                   \
    template Var concat_channels(Tape<T>&, Var, Var);                                   \
    template Var bicubic_resize(Tape<T>&, Var, int, int);                               \
    template Var softmax_rows(Tape<T>&, Var);                                           \
    template Var group_weighted_sum(Tape<T>&, Var, Var);                                \
    template Var rows_to_map(Tape<T>&, Var, int, int);                                  \
    template Var window_filter_valid(Tape<T>&, Var, const std::vector<double>&);

SSA_INSTANTIATE_GRAPH_OPS(float)
SSA_INSTANTIATE_GRAPH_OPS(double)

}  // namespace ssa::ops
