#pragma once

// Reconstruction quality indexes and the training objective.
//
// All indexes treat a (n, c, h, w) cube as c bands of n*h*w pixels and
// accumulate in double precision.

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "ssa/autodiff.hpp"

namespace ssa {

double rmse(const Tensor4& pred, const Tensor4& gt);

/// Per-band RMSE, length c.
std::vector<double> band_rmse(const Tensor4& pred, const Tensor4& gt);

/// 20 log10(peak / rmse); +infinity when the images are identical.
double psnr(const Tensor4& pred, const Tensor4& gt, double peak = 255.0);

struct SamResult {
    double degrees = 0.0;
    std::size_t zero_norm_pixels = 0;  // pixels whose spectrum had zero norm (each contributed 0)
};

/// Mean per-pixel spectral angle, in degrees.
SamResult sam_detailed(const Tensor4& pred, const Tensor4& gt);
inline double sam(const Tensor4& pred, const Tensor4& gt) { return sam_detailed(pred, gt).degrees; }

/// 100 / scale * sqrt(mean_j (RMSE_j / mu_j)^2). Throws DegenerateBandError when a GT band mean is 0.
double ergas(const Tensor4& pred, const Tensor4& gt, double scale);

struct SsimResult {
    double value = 1.0;
    int window = 11;
    bool window_shrunk = false;  // image was smaller than the 11x11 window
};

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

/// Size of the Gaussian window used for an h x w image: min(11, h, w).
int ssim_window_for(int h, int w);

/// Per-band mean SSIM over all valid windows, averaged over bands.
/// C1 = (0.01 peak)^2, C2 = (0.03 peak)^2.
SsimResult ssim_detailed(const Tensor4& pred, const Tensor4& gt, double peak = 1.0);
inline double ssim(const Tensor4& pred, const Tensor4& gt, double peak = 1.0) {
    return ssim_detailed(pred, gt, peak).value;
}

struct MetricsReport {
    std::string dataset;
    double scale = 1.0;
    double psnr = 0.0;
    double sam = 0.0;
    double ergas = 0.0;
    double ssim = 0.0;
    double rmse = 0.0;
    std::vector<double> per_band_rmse;
    std::size_t sam_zero_norm_pixels = 0;
    bool ssim_window_shrunk = false;
};

MetricsReport evaluate(const Tensor4& pred, const Tensor4& gt, double scale, double peak,
                       const std::string& dataset = "");

/// "dataset,scale,psnr,sam_deg,ergas,ssim,rmse"
std::string metrics_csv_header();
/// One row with 6-decimal fixed values; an infinite PSNR is written as "inf".
std::string metrics_csv_row(const MetricsReport& r);

// ---------------------------------------------------------------------------
// Training objective

template <typename T>
struct LossTerms {
    Var total;      // l1 + lambda * ssim_loss
    Var l1;         // mean |pred - gt|
    Var ssim_loss;  // 1 - SSIM(pred, gt) at peak 1
};

/// Differentiable L1 + lambda * (1 - SSIM). pred and gt must share dims.
template <typename T>
LossTerms<T> total_loss(Tape<T>& tape, Var pred, Var gt, T lambda);

/// Differentiable mean SSIM (same window rules and constants as ssim()).
template <typename T>
Var ssim_graph(Tape<T>& tape, Var pred, Var gt, double peak);

}  // namespace ssa
