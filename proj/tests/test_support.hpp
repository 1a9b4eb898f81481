#pragma once

// Generators, brute-force references and a central-difference gradient checker
// shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ssa/autodiff.hpp"
#include "ssa/random.hpp"
#include "ssa/tensor.hpp"

namespace ssa::test {

template <typename T = float>
BasicTensor4<T> random_tensor(Rng& rng, Shape4 d, double lo = -1.0, double hi = 1.0) {
    BasicTensor4<T> t(d);
    for (auto& v : t.values()) v = static_cast<T>(uniform(rng, lo, hi));
    return t;
}

inline int random_int(Rng& rng, int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

/// Direct triple loop over the convolution formula: bias first, then taps in
/// (channel, row, column) order, out-of-range taps skipped.
template <typename T>
BasicTensor4<T> naive_conv(const BasicTensor4<T>& x, const BasicKernel4<T>& k, int stride, int pad) {
    const int K = k.k();
    const int oh = (x.h() + 2 * pad - K) / stride + 1;
    const int ow = (x.w() + 2 * pad - K) / stride + 1;
    BasicTensor4<T> y(x.n(), k.out_c(), oh, ow);
    for (int n = 0; n < x.n(); ++n) {
        for (int d = 0; d < k.out_c(); ++d) {
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    T acc = k.bias.empty() ? T(0) : k.bias[d];
                    for (int c = 0; c < x.c(); ++c) {
                        for (int m = 0; m < K; ++m) {
                            for (int q = 0; q < K; ++q) {
                                const int si = i * stride + m - pad;
                                const int sj = j * stride + q - pad;
                                if (si < 0 || si >= x.h() || sj < 0 || sj >= x.w()) continue;
                                acc += x.at(n, c, si, sj) * k.weight.at(d, c, m, q);
                            }
                        }
                    }
                    y.at(n, d, i, j) = acc;
                }
            }
        }
    }
    return y;
}

/// ||a - b||_2 / max(||a||_2, ||b||_2), 0 when both vanish.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double den = std::sqrt(std::max(na, nb));
    return den == 0.0 ? std::sqrt(num) : std::sqrt(num) / den;
}

template <typename T>
std::vector<double> to_doubles(const BasicTensor4<T>& t) {
    return std::vector<double>(t.values().begin(), t.values().end());
}

/// Builds a scalar from leaf variables on a fresh tape.
template <typename T>
using ScalarFn = std::function<Var(Tape<T>&, const std::vector<Var>&)>;

template <typename T>
double eval_scalar(const ScalarFn<T>& f, const std::vector<BasicTensor4<T>>& inputs) {
    Tape<T> tape(false);
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.constant(t));
    return static_cast<double>(tape.value(f(tape, vars))[0]);
}

template <typename T>
std::vector<BasicTensor4<T>> analytic_grads(const ScalarFn<T>& f, const std::vector<BasicTensor4<T>>& inputs) {
    Tape<T> tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    tape.backward(f(tape, vars));
    std::vector<BasicTensor4<T>> out;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        out.push_back(tape.has_grad(vars[i]) ? tape.grad(vars[i]) : BasicTensor4<T>(inputs[i].dims()));
    }
    return out;
}

/// Central differences of f in double with step h, for every input element.
inline std::vector<std::vector<double>> numeric_grads(const ScalarFn<double>& f,
                                                      const std::vector<Tensor4d>& inputs, double h) {
    std::vector<std::vector<double>> out;
    auto work = inputs;
    for (std::size_t k = 0; k < work.size(); ++k) {
        std::vector<double> g(work[k].size());
        for (std::size_t i = 0; i < work[k].size(); ++i) {
            const double keep = work[k][i];
            work[k][i] = keep + h;
            const double fp = eval_scalar(f, work);
            work[k][i] = keep - h;
            const double fm = eval_scalar(f, work);
            work[k][i] = keep;
            g[i] = (fp - fm) / (2.0 * h);
        }
        out.push_back(std::move(g));
    }
    return out;
}

/// Worst per-input relative error of the double-precision analytic gradient.
inline double grad_check_double(const ScalarFn<double>& f, const std::vector<Tensor4d>& inputs, double h = 1e-5) {
    const auto a = analytic_grads(f, inputs);
    const auto n = numeric_grads(f, inputs, h);
    double worst = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) worst = std::max(worst, rel_error(to_doubles(a[k]), n[k]));
    return worst;
}

struct ScreenedCheck {
    double error = 0.0;
    std::size_t screened = 0;
    std::size_t total = 0;
};

/// Central differences at h and h/10; an element whose two estimates disagree
/// straddles a kink (relu, |x|) and is left out of the comparison.
inline ScreenedCheck screened_compare(const std::vector<double>& analytic, const std::vector<double>& fd_h,
                                      const std::vector<double>& fd_small) {
    ScreenedCheck out;
    std::vector<double> a, n;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        ++out.total;
        if (std::abs(fd_h[i] - fd_small[i]) > 1e-8 + 1e-4 * std::abs(fd_h[i])) {
            ++out.screened;
            continue;
        }
        a.push_back(analytic[i]);
        n.push_back(fd_h[i]);
    }
    out.error = rel_error(a, n);
    return out;
}

inline ScreenedCheck grad_check_double_screened(const ScalarFn<double>& f, const std::vector<Tensor4d>& inputs,
                                                double h = 1e-5) {
    const auto a = analytic_grads(f, inputs);
    const auto n1 = numeric_grads(f, inputs, h);
    const auto n2 = numeric_grads(f, inputs, h / 10);
    std::vector<double> fa, f1, f2;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto ak = to_doubles(a[k]);
        fa.insert(fa.end(), ak.begin(), ak.end());
        f1.insert(f1.end(), n1[k].begin(), n1[k].end());
        f2.insert(f2.end(), n2[k].begin(), n2[k].end());
    }
    return screened_compare(fa, f1, f2);
}

/// Worst per-input relative error of the float analytic gradient against double central differences.
inline double grad_check_float(const ScalarFn<float>& ff, const ScalarFn<double>& fd,
                               const std::vector<Tensor4d>& inputs, double h = 1e-5) {
    std::vector<Tensor4> finputs;
    for (const auto& t : inputs) finputs.push_back(t.cast<float>());
    // evaluate the double oracle at the float-rounded point
    std::vector<Tensor4d> rounded;
    for (const auto& t : finputs) rounded.push_back(t.cast<double>());
    const auto a = analytic_grads(ff, finputs);
    const auto n = numeric_grads(fd, rounded, h);
    double worst = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) worst = std::max(worst, rel_error(to_doubles(a[k]), n[k]));
    return worst;
}

}  // namespace ssa::test
