#pragma once

// Direct 64-bit evaluations of the quality indexes.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ssa/kernels.hpp"
#include "ssa/tensor.hpp"

namespace ssa::test {

inline double rmse_oracle(const Tensor4& a, const Tensor4& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

inline double ergas_oracle(const Tensor4& pred, const Tensor4& gt, double scale) {
    double acc = 0;
    const std::size_t m = gt.dims().plane();
    for (int c = 0; c < gt.c(); ++c) {
        double se = 0, mean = 0;
        for (std::size_t p = 0; p < m; ++p) {
            const double g = gt.plane(0, c)[p];
            const double d = static_cast<double>(pred.plane(0, c)[p]) - g;
            se += d * d;
            mean += g;
        }
        mean /= static_cast<double>(m);
        const double r = std::sqrt(se / static_cast<double>(m)) / mean;
        acc += r * r;
    }
    return 100.0 / scale * std::sqrt(acc / gt.c());
}

// Sliding-window SSIM, every window summed directly in double.
inline double ssim_oracle(const Tensor4& x, const Tensor4& y, double peak) {
    const int win = std::min({11, x.h(), x.w()});
    const auto g = gaussian_window(win, 1.5);
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    double band_sum = 0;
    for (int c = 0; c < x.c(); ++c) {
        double map_sum = 0;
        int count = 0;
        for (int i = 0; i + win <= x.h(); ++i) {
            for (int j = 0; j + win <= x.w(); ++j) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int a = 0; a < win; ++a) {
                    for (int b = 0; b < win; ++b) {
                        const double w = g[a] * g[b];
                        const double u = x.at(0, c, i + a, j + b);
                        const double v = y.at(0, c, i + a, j + b);
                        mx += w * u;
                        my += w * v;
                        sxx += w * u * u;
                        syy += w * v * v;
                        sxy += w * u * v;
                    }
                }
                const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
                map_sum += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        }
        band_sum += map_sum / count;
    }
    return band_sum / x.c();
}

inline double psnr_oracle(const Tensor4& pred, const Tensor4& gt, double peak) {
    const double e = rmse_oracle(pred, gt);
    return e == 0.0 ? INFINITY : 10.0 * std::log10(peak * peak / (e * e));
}

// Mean spectral angle in degrees via the half-angle form 2 atan(|u - v| / |u + v|) on unit vectors.
inline double sam_oracle(const Tensor4& pred, const Tensor4& gt) {
    double total = 0;
    const std::size_t m = gt.dims().plane();
    for (std::size_t p = 0; p < m; ++p) {
        double na = 0, nb = 0;
        for (int c = 0; c < gt.c(); ++c) {
            na += static_cast<double>(pred.plane(0, c)[p]) * pred.plane(0, c)[p];
            nb += static_cast<double>(gt.plane(0, c)[p]) * gt.plane(0, c)[p];
        }
        if (na == 0.0 || nb == 0.0) continue;
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        double diff = 0, sum = 0;
        for (int c = 0; c < gt.c(); ++c) {
            const double u = pred.plane(0, c)[p] / na;
            const double v = gt.plane(0, c)[p] / nb;
            diff += (u - v) * (u - v);
            sum += (u + v) * (u + v);
        }
        total += 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
    }
    return total / static_cast<double>(m) * 180.0 / std::numbers::pi;
}

}  // namespace ssa::test
