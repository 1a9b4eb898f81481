#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ssa/errors.hpp"
#include "ssa/kernels.hpp"
#include "test_support.hpp"

using namespace ssa;
using namespace ssa::test;

namespace {

template <typename T>
BasicKernel4<T> random_kernel(Rng& rng, int out_c, int in_c, int k, bool bias) {
    BasicKernel4<T> kern;
    kern.weight = random_tensor<T>(rng, Shape4{out_c, in_c, k, k});
    if (bias) {
        for (int d = 0; d < out_c; ++d) kern.bias.push_back(static_cast<T>(uniform(rng, -1, 1)));
    }
    return kern;
}

// <g, conv(x)> in double, for finite differences of the plain API.
double conv_dot(const Tensor4d& x, const Kernel4d& k, const Tensor4d& g, int stride, int pad) {
    const auto y = conv2d_forward(x, k, stride, pad);
    double acc = 0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * g[i];
    return acc;
}

}  // namespace

TEST_CASE("conv: single multiply-accumulate") {
    Kernel4 k;
    k.weight = Tensor4(Shape4{1, 1, 1, 1}, {3.0f});
    k.bias = {1.0f};
    const Tensor4 x(Shape4{1, 1, 1, 1}, {2.0f});
    Conv2dContext<float> ctx;
    const auto y = conv2d_forward(x, k, 1, 0, &ctx);
    CHECK(y.dims() == Shape4{1, 1, 1, 1});
    CHECK(y[0] == 7.0f);

    const auto g = conv2d_backward(Tensor4(1, 1, 1, 1, 1.0f), ctx);
    CHECK(g.grad_kernel.weight[0] == 2.0f);
    CHECK(g.grad_kernel.bias[0] == 1.0f);
    CHECK(g.grad_x[0] == 3.0f);
}

TEST_CASE("conv: all-ones 2x2 input with a 3x3 all-ones kernel counts in-bounds taps") {
    Kernel4 k;
    k.weight = Tensor4(1, 2, 3, 3, 1.0f);
    k.bias = {0.0f};
    const auto y = conv2d_forward(Tensor4(1, 2, 2, 2, 1.0f), k, 1, 1);
    REQUIRE(y.dims() == Shape4{1, 1, 2, 2});
    // every output sees the whole 2x2 image in both channels
    for (float v : y.values()) CHECK(v == 8.0f);
}

TEST_CASE("conv: identity delta reproduces the selected channel") {
    Rng rng(3);
    const auto x = random_tensor(rng, Shape4{2, 3, 5, 4});
    for (int k : {1, 3, 5}) {
        Kernel4 kern;
        kern.weight = Tensor4(1, 3, k, k);
        kern.weight.at(0, 1, k / 2, k / 2) = 1.0f;
        kern.bias = {0.0f};
        const auto y = conv2d_forward(x, kern, 1, (k - 1) / 2);
        for (int n = 0; n < 2; ++n) {
            for (int i = 0; i < 5; ++i) {
                for (int j = 0; j < 4; ++j) CHECK(y.at(n, 0, i, j) == x.at(n, 1, i, j));
            }
        }
    }
}

TEST_CASE("conv: forward equals the naive reference bit for bit on the small-shape grid") {
    Rng rng(11);
    int cases = 0;
    for (int n = 1; n <= 3; ++n)
        for (int c = 1; c <= 3; ++c)
            for (int oc = 1; oc <= 3; ++oc)
                for (int h = 1; h <= 6; ++h)
                    for (int w = 1; w <= 6; ++w)
                        for (int k : {1, 3})
                            for (int stride : {1, 2})
                                for (int pad : {0, 1}) {
                                    if (h + 2 * pad < k || w + 2 * pad < k) continue;
                                    const auto x = random_tensor(rng, Shape4{n, c, h, w});
                                    const auto kern = random_kernel<float>(rng, oc, c, k, (h + w) % 2 == 0);
                                    const auto got = conv2d_forward(x, kern, stride, pad);
                                    const auto want = naive_conv(x, kern, stride, pad);
                                    REQUIRE(bitwise_equal(got, want));
                                    ++cases;
                                }
    CHECK(cases > 5000);
}

TEST_CASE("conv: backward matches central differences") {
    Rng rng(5);
    for (int trial = 0; trial < 6; ++trial) {
        const int stride = 1 + trial % 2;
        const int pad = trial % 3 == 0 ? 0 : 1;
        const auto x = random_tensor<double>(rng, Shape4{1, 2, 3 + trial % 2, 3});
        auto k = random_kernel<double>(rng, 2, 2, 3, true);
        const auto probe = conv2d_forward(x, k, stride, pad);
        const auto g = random_tensor<double>(rng, probe.dims());
        Conv2dContext<double> ctx;
        conv2d_forward(x, k, stride, pad, &ctx);
        const auto grads = conv2d_backward(g, ctx);

        const double h = 1e-3;
        std::vector<double> nx(x.size()), nw(k.weight.size()), nb(k.bias.size());
        auto xx = x;
        for (std::size_t i = 0; i < x.size(); ++i) {
            xx[i] = x[i] + h;
            const double fp = conv_dot(xx, k, g, stride, pad);
            xx[i] = x[i] - h;
            const double fm = conv_dot(xx, k, g, stride, pad);
            xx[i] = x[i];
            nx[i] = (fp - fm) / (2 * h);
        }
        auto kk = k;
        for (std::size_t i = 0; i < k.weight.size(); ++i) {
            kk.weight[i] = k.weight[i] + h;
            const double fp = conv_dot(x, kk, g, stride, pad);
            kk.weight[i] = k.weight[i] - h;
            const double fm = conv_dot(x, kk, g, stride, pad);
            kk.weight[i] = k.weight[i];
            nw[i] = (fp - fm) / (2 * h);
        }
        for (std::size_t i = 0; i < k.bias.size(); ++i) {
            kk.bias[i] = k.bias[i] + h;
            const double fp = conv_dot(x, kk, g, stride, pad);
            kk.bias[i] = k.bias[i] - h;
            const double fm = conv_dot(x, kk, g, stride, pad);
            kk.bias[i] = k.bias[i];
            nb[i] = (fp - fm) / (2 * h);
        }
        CHECK(rel_error(to_doubles(grads.grad_x), nx) <= 1e-6);
        CHECK(rel_error(to_doubles(grads.grad_kernel.weight), nw) <= 1e-6);
        CHECK(rel_error(std::vector<double>(grads.grad_kernel.bias.begin(), grads.grad_kernel.bias.end()), nb) <= 1e-6);
    }
}

TEST_CASE("conv: 32-bit backward on a random 1x2x3x3 instance within 1e-4") {
    Rng rng(8);
    const auto xd = random_tensor<double>(rng, Shape4{1, 2, 3, 3});
    auto kd = random_kernel<double>(rng, 2, 2, 3, true);
    const auto gd = random_tensor<double>(rng, Shape4{1, 2, 3, 3});
    Kernel4 kf;
    kf.weight = kd.weight.cast<float>();
    for (double b : kd.bias) kf.bias.push_back(static_cast<float>(b));
    Conv2dContext<float> ctx;
    conv2d_forward(xd.cast<float>(), kf, 1, 1, &ctx);
    const auto gf = conv2d_backward(gd.cast<float>(), ctx);
    // oracle at the float-rounded point
    const auto x64 = xd.cast<float>().cast<double>();
    Kernel4d k64;
    k64.weight = kf.weight.cast<double>();
    for (float b : kf.bias) k64.bias.push_back(b);
    const auto g64 = gd.cast<float>().cast<double>();
    std::vector<double> nw(k64.weight.size());
    for (std::size_t i = 0; i < nw.size(); ++i) {
        auto kp = k64;
        kp.weight[i] += 1e-3;
        auto km = k64;
        km.weight[i] -= 1e-3;
        nw[i] = (conv_dot(x64, kp, g64, 1, 1) - conv_dot(x64, km, g64, 1, 1)) / 2e-3;
    }
    CHECK(rel_error(to_doubles(gf.grad_kernel.weight), nw) <= 1e-4);
}

TEST_CASE("conv: zero upstream gradient gives zero gradients") {
    Rng rng(9);
    auto k = random_kernel<float>(rng, 3, 2, 3, true);
    Conv2dContext<float> ctx;
    const auto y = conv2d_forward(random_tensor(rng, Shape4{2, 2, 4, 4}), k, 1, 1, &ctx);
    const auto g = conv2d_backward(Tensor4(y.dims()), ctx);
    for (float v : g.grad_x.values()) CHECK(v == 0.0f);
    for (float v : g.grad_kernel.weight.values()) CHECK(v == 0.0f);
    for (float v : g.grad_kernel.bias) CHECK(v == 0.0f);
}

TEST_CASE("conv: errors") {
    Kernel4 k;
    k.weight = Tensor4(1, 2, 3, 3);
    CHECK_THROWS_AS(conv2d_forward(Tensor4(1, 3, 4, 4), k, 1, 1), ShapeError);
    CHECK_THROWS_AS(conv2d_forward(Tensor4(1, 2, 1, 1), k, 1, 0), ConfigError);
    CHECK_THROWS_AS(conv2d_forward(Tensor4(1, 2, 4, 4), k, 0, 1), ConfigError);
    Conv2dContext<float> empty;
    CHECK_THROWS_AS(conv2d_backward(Tensor4(1, 1, 1, 1), empty), StateError);
    Conv2dContext<float> ctx;
    conv2d_forward(Tensor4(1, 2, 4, 4), k, 1, 1, &ctx);
    CHECK_THROWS_AS(conv2d_backward(Tensor4(1, 1, 3, 3), ctx), ShapeError);
}

TEST_CASE("conv: forward is pure") {
    Rng rng(10);
    const auto x = random_tensor(rng, Shape4{1, 4, 7, 9});
    const auto k = random_kernel<float>(rng, 5, 4, 3, true);
    CHECK(bitwise_equal(conv2d_forward(x, k, 1, 1), conv2d_forward(x, k, 1, 1)));
}

TEST_CASE("linear: identity and hand arithmetic") {
    Rng rng(12);
    const auto x = random_tensor(rng, Shape4{3, 4, 1, 1});
    Tensor4 eye(4, 4, 1, 1);
    for (int i = 0; i < 4; ++i) eye.at(i, i, 0, 0) = 1.0f;
    const std::vector<float> zero(4, 0.0f);
    CHECK(bitwise_equal(linear_forward(x, eye, std::span<const float>(zero)), x));

    const Tensor4 x2(Shape4{1, 2, 1, 1}, {1.0f, 2.0f});
    const Tensor4 w2(Shape4{2, 2, 1, 1}, {1.0f, 1.0f, 0.0f, 1.0f});
    const std::vector<float> b2 = {0.0f, 1.0f};
    const auto y = linear_forward(x2, w2, std::span<const float>(b2));
    CHECK(y[0] == 3.0f);
    CHECK(y[1] == 3.0f);
    CHECK_THROWS_AS(linear_forward(x2, Tensor4(2, 3, 1, 1), std::span<const float>(b2)), ShapeError);
}

TEST_CASE("linear: gradients of a random 3x4 -> 2 instance") {
    Rng rng(13);
    const auto x = random_tensor<double>(rng, Shape4{3, 4, 1, 1});
    const auto w = random_tensor<double>(rng, Shape4{2, 4, 1, 1});
    const auto g = random_tensor<double>(rng, Shape4{3, 2, 1, 1});
    const auto grads = linear_backward(g, x, w);
    auto f = [&](const Tensor4d& xx, const Tensor4d& ww) {
        const auto y = linear_forward(xx, ww, std::span<const double>());
        double acc = 0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * g[i];
        return acc;
    };
    std::vector<double> nx(x.size()), nw(w.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto p = x, m = x;
        p[i] += 1e-3;
        m[i] -= 1e-3;
        nx[i] = (f(p, w) - f(m, w)) / 2e-3;
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
        auto p = w, m = w;
        p[i] += 1e-3;
        m[i] -= 1e-3;
        nw[i] = (f(x, p) - f(x, m)) / 2e-3;
    }
    CHECK(rel_error(to_doubles(grads.grad_x), nx) <= 1e-6);
    CHECK(rel_error(to_doubles(grads.grad_w), nw) <= 1e-6);
    for (int o = 0; o < 2; ++o) CHECK(grads.grad_b[o] == doctest::Approx(g[o] + g[2 + o] + g[4 + o]).epsilon(1e-12));
}

TEST_CASE("softmax examples") {
    const std::vector<float> zeros(4, 0.0f);
    for (float v : softmax(std::span<const float>(zeros))) CHECK(v == doctest::Approx(0.25f).epsilon(1e-7));

    const std::vector<float> big = {1000.0f, 0.0f};
    const auto s = softmax(std::span<const float>(big));
    CHECK(std::isfinite(s[0]));
    CHECK(std::abs(s[0] - 1.0f) <= 1e-6f);
    CHECK(std::abs(s[1]) <= 1e-6f);

    const std::vector<double> v = {1, 2, 3, 4};
    const auto got = softmax(std::span<const double>(v));
    const double den = std::exp(1.0) + std::exp(2.0) + std::exp(3.0) + std::exp(4.0);
    for (int i = 0; i < 4; ++i) CHECK(got[i] == doctest::Approx(std::exp(v[i]) / den).epsilon(1e-14));

    CHECK_THROWS_AS(softmax(std::span<const float>()), ArgumentError);
}

TEST_CASE("softmax is a shift-invariant probability vector") {
    Rng rng(14);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = random_int(rng, 1, 9);
        std::vector<float> v(n), shifted(n);
        const float shift = static_cast<float>(uniform(rng, -50, 50));
        for (int i = 0; i < n; ++i) {
            v[i] = static_cast<float>(uniform(rng, -10, 10));
            shifted[i] = v[i] + shift;
        }
        const auto a = softmax(std::span<const float>(v));
        const auto b = softmax(std::span<const float>(shifted));
        double sum = 0;
        for (int i = 0; i < n; ++i) {
            CHECK(a[i] >= 0.0f);
            sum += a[i];
            CHECK(std::abs(a[i] - b[i]) <= 1e-6);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
}

TEST_CASE("keys cubic weights and Gaussian window") {
    CHECK(keys_cubic(0.0) == 1.0);
    CHECK(keys_cubic(1.0) == 0.0);
    CHECK(keys_cubic(2.0) == 0.0);
    CHECK(keys_cubic(-1.0) == 0.0);
    CHECK(keys_cubic(0.5) == doctest::Approx(0.5625));
    CHECK(keys_cubic(1.5) == doctest::Approx(-0.0625));
    for (double t : {0.0, 0.1, 0.37, 0.5, 0.99}) {
        const double sum = keys_cubic(t + 1) + keys_cubic(t) + keys_cubic(1 - t) + keys_cubic(2 - t);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    }
    const auto w = gaussian_window(11, 1.5);
    REQUIRE(w.size() == 11);
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(w[5] > w[4]);
    CHECK(w[0] == doctest::Approx(w[10]).epsilon(1e-15));
}

TEST_CASE("bicubic: identity at equal dims and exact constants") {
    Rng rng(15);
    const auto x = random_tensor(rng, Shape4{2, 3, 5, 7});
    CHECK(bitwise_equal(bicubic_resize(x, 5, 7), x));
    const Tensor4 c(2, 2, 3, 4, 0.3712f);
    for (auto [h, w] : {std::pair{3, 4}, {7, 9}, {26, 26}, {4, 5}, {1, 1}, {10, 3}}) {
        const auto y = bicubic_resize(c, h, w);
        REQUIRE(y.dims() == Shape4{2, 2, h, w});
        for (float v : y.values()) CHECK(v == 0.3712f);
    }
    CHECK_THROWS_AS(bicubic_resize(x, 0, 4), ArgumentError);
}

TEST_CASE("bicubic: a 4x4 linear ramp upsampled x2 stays linear") {
    Tensor4d ramp(1, 1, 4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) ramp.at(0, 0, i, j) = 0.25 * i + 0.5 * j + 1.0;
    const auto y = bicubic_resize(ramp, 8, 8);
    // corner-aligned: output pixel i sits at input coordinate i * 3 / 7
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            const double want = 0.25 * (i * 3.0 / 7.0) + 0.5 * (j * 3.0 / 7.0) + 1.0;
            CHECK(std::abs(y.at(0, 0, i, j) - want) <= 1e-5);
        }
    }
    const auto yf = bicubic_resize(ramp.cast<float>(), 8, 8);
    for (std::size_t i = 0; i < yf.size(); ++i) CHECK(std::abs(yf[i] - y[i]) <= 1e-5);
}

TEST_CASE("bicubic: backward is the adjoint of forward") {
    Rng rng(16);
    for (auto [h, w, oh, ow] : {std::array{3, 4, 7, 9}, {5, 5, 16, 16}, {1, 3, 2, 8}, {4, 4, 4, 4}, {10, 10, 32, 32}}) {
        const auto x = random_tensor<double>(rng, Shape4{1, 2, h, w});
        const auto g = random_tensor<double>(rng, Shape4{1, 2, oh, ow});
        const auto y = bicubic_resize(x, oh, ow);
        const auto xt = bicubic_resize_backward(g, h, w);
        double lhs = 0, rhs = 0;
        for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
        for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * xt[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}
