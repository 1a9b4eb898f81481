#include "ssa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "ssa/graph_ops.hpp"
#include "ssa/kernels.hpp"

namespace ssa {

namespace {

std::size_t pixels_per_band(const Tensor4& t) { return static_cast<std::size_t>(t.n()) * t.dims().plane(); }

// Visits every pixel of band c across the batch.
template <typename F>
void for_band(const Tensor4& t, int c, F&& f) {
    for (int n = 0; n < t.n(); ++n) {
        auto p = t.plane(n, c);
        for (std::size_t i = 0; i < p.size(); ++i) f(n, i);
    }
}

}  // namespace

std::vector<double> band_rmse(const Tensor4& pred, const Tensor4& gt) {
    require_same_dims(pred.dims(), gt.dims(), "band_rmse");
    std::vector<double> out(static_cast<std::size_t>(gt.c()));
    const double m = static_cast<double>(pixels_per_band(gt));
    for (int c = 0; c < gt.c(); ++c) {
        double acc = 0;
        for_band(gt, c, [&](int n, std::size_t i) {
            const double d = static_cast<double>(pred.plane(n, c)[i]) - gt.plane(n, c)[i];
            acc += d * d;
        });
        out[c] = std::sqrt(acc / m);
    }
    return out;
}

double rmse(const Tensor4& pred, const Tensor4& gt) {
    require_same_dims(pred.dims(), gt.dims(), "rmse");
    if (gt.size() == 0) throw ArgumentError("rmse of empty tensors");
    double acc = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - gt[i];
        acc += d * d;
    }
    // ||diff||_F / sqrt(b * m), taken under one square root
    return std::sqrt(acc / (static_cast<double>(gt.c()) * static_cast<double>(pixels_per_band(gt))));
}

double psnr(const Tensor4& pred, const Tensor4& gt, double peak) {
    const double e = rmse(pred, gt);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(peak / e);
}

SamResult sam_detailed(const Tensor4& pred, const Tensor4& gt) {
    require_same_dims(pred.dims(), gt.dims(), "sam");
    SamResult r;
    const std::size_t plane = gt.dims().plane();
    const std::size_t count = pixels_per_band(gt);
    if (count == 0) throw ArgumentError("sam of empty tensors");
    double total = 0;
    for (int n = 0; n < gt.n(); ++n) {
        for (std::size_t p = 0; p < plane; ++p) {
            double dot = 0, np = 0, ng = 0;
            for (int c = 0; c < gt.c(); ++c) {
                const double a = pred.plane(n, c)[p];
                const double b = gt.plane(n, c)[p];
                dot += a * b;
                np += a * a;
                ng += b * b;
            }
            if (np == 0.0 || ng == 0.0) {
                ++r.zero_norm_pixels;
                continue;
            }
            const double cosv = std::clamp(dot / std::sqrt(np * ng), -1.0, 1.0);
            total += std::acos(cosv);
        }
    }
    r.degrees = total / static_cast<double>(count) * 180.0 / std::numbers::pi;
    return r;
}

double ergas(const Tensor4& pred, const Tensor4& gt, double scale) {
    require_same_dims(pred.dims(), gt.dims(), "ergas");
    if (!(scale > 0.0)) throw ArgumentError("ergas: scale must be positive");
    const auto br = band_rmse(pred, gt);
    const double m = static_cast<double>(pixels_per_band(gt));
    double acc = 0;
    for (int c = 0; c < gt.c(); ++c) {
        double mu = 0;
        for_band(gt, c, [&](int n, std::size_t i) { mu += gt.plane(n, c)[i]; });
        mu /= m;
        if (mu == 0.0) {
            throw DegenerateBandError("ergas: ground-truth band " + std::to_string(c) + " has zero mean", c);
        }
        const double rel = br[c] / mu;
        acc += rel * rel;
    }
    return 100.0 / scale * std::sqrt(acc / gt.c());
}

int ssim_window_for(int h, int w) { return std::min({kSsimWindow, h, w}); }

namespace {

// Separable "valid" filtering of one plane in double.
std::vector<double> filter_valid(const std::vector<double>& src, int H, int W, const std::vector<double>& win) {
    const int L = static_cast<int>(win.size());
    const int oh = H - L + 1;
    const int ow = W - L + 1;
    std::vector<double> tmp(static_cast<std::size_t>(H) * ow);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < ow; ++j) {
            double acc = 0;
            for (int q = 0; q < L; ++q) acc += win[q] * src[static_cast<std::size_t>(i) * W + j + q];
            tmp[static_cast<std::size_t>(i) * ow + j] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            double acc = 0;
            for (int m = 0; m < L; ++m) acc += win[m] * tmp[static_cast<std::size_t>(i + m) * ow + j];
            out[static_cast<std::size_t>(i) * ow + j] = acc;
        }
    }
    return out;
}

}  // namespace

SsimResult ssim_detailed(const Tensor4& pred, const Tensor4& gt, double peak) {
    require_same_dims(pred.dims(), gt.dims(), "ssim");
    if (gt.size() == 0) throw ArgumentError("ssim of empty tensors");
    SsimResult r;
    const int H = gt.h();
    const int W = gt.w();
    r.window = ssim_window_for(H, W);
    r.window_shrunk = r.window < kSsimWindow;
    const auto win = gaussian_window(r.window, kSsimSigma);
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const std::size_t plane = gt.dims().plane();
    double band_sum = 0;
    for (int n = 0; n < gt.n(); ++n) {
        for (int c = 0; c < gt.c(); ++c) {
            std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
            for (std::size_t i = 0; i < plane; ++i) {
                x[i] = pred.plane(n, c)[i];
                y[i] = gt.plane(n, c)[i];
                xx[i] = x[i] * x[i];
                yy[i] = y[i] * y[i];
                xy[i] = x[i] * y[i];
            }
            const auto mx = filter_valid(x, H, W, win);
            const auto my = filter_valid(y, H, W, win);
            const auto fxx = filter_valid(xx, H, W, win);
            const auto fyy = filter_valid(yy, H, W, win);
            const auto fxy = filter_valid(xy, H, W, win);
            double acc = 0;
            for (std::size_t i = 0; i < mx.size(); ++i) {
                const double sxx = fxx[i] - mx[i] * mx[i];
                const double syy = fyy[i] - my[i] * my[i];
                const double sxy = fxy[i] - mx[i] * my[i];
                const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * sxy + c2);
                const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (sxx + syy + c2);
                acc += num / den;
            }
            band_sum += acc / static_cast<double>(mx.size());
        }
    }
    r.value = band_sum / (static_cast<double>(gt.n()) * gt.c());
    return r;
}

MetricsReport evaluate(const Tensor4& pred, const Tensor4& gt, double scale, double peak,
                       const std::string& dataset) {
    MetricsReport r;
    r.dataset = dataset;
    r.scale = scale;
    r.rmse = rmse(pred, gt);
    r.per_band_rmse = band_rmse(pred, gt);
    r.psnr = psnr(pred, gt, peak);
    const auto s = sam_detailed(pred, gt);
    r.sam = s.degrees;
    r.sam_zero_norm_pixels = s.zero_norm_pixels;
    r.ergas = ergas(pred, gt, scale);
    const auto q = ssim_detailed(pred, gt, peak);
    r.ssim = q.value;
    r.ssim_window_shrunk = q.window_shrunk;
    return r;
}

std::string metrics_csv_header() { return "dataset,scale,psnr,sam_deg,ergas,ssim,rmse"; }

std::string metrics_csv_row(const MetricsReport& r) {
    auto fmt = [](double v) {
        if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    return r.dataset + "," + fmt(r.scale) + "," + fmt(r.psnr) + "," + fmt(r.sam) + "," + fmt(r.ergas) + "," +
           fmt(r.ssim) + "," + fmt(r.rmse);
}

template <typename T>
Var ssim_graph(Tape<T>& tape, Var pred, Var gt, double peak) {
    require_same_dims(tape.value(pred).dims(), tape.value(gt).dims(), "ssim");
    const auto& d = tape.value(gt).dims();
    const auto win = gaussian_window(ssim_window_for(d.h, d.w), kSsimSigma);
    const T c1 = static_cast<T>((0.01 * peak) * (0.01 * peak));
    const T c2 = static_cast<T>((0.03 * peak) * (0.03 * peak));
    using namespace ops;
    Var mx = window_filter_valid(tape, pred, win);
    Var my = window_filter_valid(tape, gt, win);
    Var fxx = window_filter_valid(tape, mul(tape, pred, pred), win);
    Var fyy = window_filter_valid(tape, mul(tape, gt, gt), win);
    Var fxy = window_filter_valid(tape, mul(tape, pred, gt), win);
    Var mxx = mul(tape, mx, mx);
    Var myy = mul(tape, my, my);
    Var mxy = mul(tape, mx, my);
    Var sxx = sub(tape, fxx, mxx);
    Var syy = sub(tape, fyy, myy);
    Var sxy = sub(tape, fxy, mxy);
    Var num = mul(tape, add_scalar(tape, scale(tape, mxy, T(2)), c1), add_scalar(tape, scale(tape, sxy, T(2)), c2));
    Var den = mul(tape, add_scalar(tape, add(tape, mxx, myy), c1), add_scalar(tape, add(tape, sxx, syy), c2));
    return mean(tape, div(tape, num, den));
}

template <typename T>
LossTerms<T> total_loss(Tape<T>& tape, Var pred, Var gt, T lambda) {
    require_same_dims(tape.value(pred).dims(), tape.value(gt).dims(), "total_loss");
    if (!(lambda >= T(0))) throw ArgumentError("total_loss: lambda must be >= 0");
    LossTerms<T> out;
    out.l1 = ops::mean(tape, ops::abs(tape, ops::sub(tape, pred, gt)));
    out.ssim_loss = ops::add_scalar(tape, ops::scale(tape, ssim_graph(tape, pred, gt, 1.0), T(-1)), T(1));
    out.total = ops::add(tape, out.l1, ops::scale(tape, out.ssim_loss, lambda));
    return out;
}

template Var ssim_graph(Tape<float>&, Var, Var, double);
template Var ssim_graph(Tape<double>&, Var, Var, double);
template LossTerms<float> total_loss(Tape<float>&, Var, Var, float);
template LossTerms<double> total_loss(Tape<double>&, Var, Var, double);

}  // namespace ssa
