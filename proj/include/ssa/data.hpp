#pragma once

// Synthetic corpus generation under Wald's protocol, bucketed datasets, the
// two-stage minibatch sampler, and tensor/manifest file I/O.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ssa/random.hpp"
#include "ssa/tensor.hpp"

namespace ssa {

constexpr double kDefaultSmoothness = 8.0;

/// Band-correlated smooth random cube (1, C, H, W) with values in [0, 1].
/// `smoothness` is the shortest spatial period in pixels; +inf gives
/// spatially constant bands. Deterministic in `seed`.
Tensor4 synth_ground_truth(std::uint64_t seed, int bands, int height, int width,
                           double smoothness = kDefaultSmoothness);

/// Gaussian blur (sigma = s/2, radius ceil(3 sigma), reflect-101 borders)
/// followed by stride-s decimation at phase floor((s-1)/2).
/// Throws ArgumentError unless s >= 2 and h, w are divisible by s.
Tensor4 anti_alias_downsample(const Tensor4& x, int s);

/// Same blur as anti_alias_downsample (sigma = ratio/2 per axis) followed by
/// corner-aligned cubic resampling to an arbitrary (out_h, out_w).
Tensor4 anti_alias_resample(const Tensor4& x, int out_h, int out_w);

/// Synthetic spectral response: c rows over C bands, each row a uniform
/// average over one contiguous group of bands.
struct SRFMatrix {
    int rows = 0;  // MSI bands
    int cols = 0;  // HSI bands
    std::vector<double> weights;  // row-major rows x cols

    double at(int r, int c) const { return weights[static_cast<std::size_t>(r) * cols + c]; }
};

/// Partition {0..C-1} into c contiguous groups; the first C % c groups get one extra band.
SRFMatrix synth_srf(int bands, int msi_bands);

/// Per-pixel spectral projection z = srf * x. Rows must sum to 1.
Tensor4 apply_srf(const SRFMatrix& srf, const Tensor4& x);

struct FusionSample {
    Tensor4 y_lr;  // (1, C, h, w)
    Tensor4 z_hr;  // (1, c, H, W)
    Tensor4 x_hr;  // (1, C, H, W)
    double scale = 1.0;
    std::string dataset_id;
};

/// y_lr = anti_alias_downsample(x_hr, s); z_hr = srf * x_hr.
FusionSample wald_simulate(const Tensor4& x_hr, int s, const SRFMatrix& srf, const std::string& dataset_id = "");

/// Fractional-ratio simulation: y_lr has the explicit (lr_h, lr_w) size; scale = H / lr_h.
FusionSample wald_simulate_to(const Tensor4& x_hr, int lr_h, int lr_w, const SRFMatrix& srf,
                              const std::string& dataset_id = "");

/// Ratio-r simulation of one HR patch: the integer path when r is an integer
/// dividing both dims, otherwise wald_simulate_to at round(H / r) x round(W / r).
FusionSample simulate_at_scale(const Tensor4& x_hr, double r, const SRFMatrix& srf, const std::string& dataset_id = "");

/// Square patches at top-left offsets {0, stride, ...} that fit inside the image, row-major.
std::vector<Tensor4> extract_patches(const Tensor4& x, int patch, int stride);

struct DatasetBucket {
    std::string dataset_id;
    int bands = 0;      // C
    int msi_bands = 0;  // c
    double scale = 1.0;
    int patch_h = 0;  // HR patch dims
    int patch_w = 0;
    std::vector<FusionSample> samples;

    /// Appends a sample after checking it matches the bucket's shape signature.
    void add(FusionSample s);
};

/// Recipe for one synthetic sensor bucket.
struct BucketSpec {
    std::string dataset_id;
    int bands = 5;
    int msi_bands = 2;
    int scale = 2;
    int patch = 32;
    int stride = 32;
    int images = 4;
    int image_size = 128;
    double smoothness = kDefaultSmoothness;
};

/// Deterministically synthesises the images of a bucket and Wald-simulates every patch.
DatasetBucket build_bucket(const BucketSpec& spec, std::uint64_t seed);

/// Derives independent sub-seeds (splitmix64 over the inputs).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// One ground-truth HR patch (1, C, patch, patch) from a seed stream disjoint from build_bucket's.
Tensor4 held_out_patch(const BucketSpec& spec, std::uint64_t seed, int index);

struct Minibatch {
    std::size_t bucket = 0;
    std::vector<const FusionSample*> samples;
};

/// Stage 1: one bucket uniformly at random. Stage 2: batch_size samples
/// uniformly with replacement from it. Throws ConfigError on an empty list
/// or an empty bucket.
Minibatch sample_minibatch(const std::vector<DatasetBucket>& buckets, Rng& rng, int batch_size);

/// True when every sample shares C, c, scale and dims.
bool is_homogeneous(const Minibatch& batch);

// ---------------------------------------------------------------------------
// Files

/// HST1: "HST1", u32 version=1, u32 n,c,h,w, 8 reserved zero bytes, then LE float32 data.
void write_tensor(const std::string& path, const Tensor4& x);
Tensor4 read_tensor(const std::string& path);

/// Writes one `<dataset_id>.manifest` plus HST1 files for every sample under `dir`.
void write_bucket(const std::string& dir, const DatasetBucket& bucket);
/// Reads a manifest written by write_bucket (paths are relative to the manifest).
DatasetBucket read_bucket(const std::string& manifest_path);
/// All `*.manifest` buckets in `dir`, sorted by file name. Throws Error when none exist.
std::vector<DatasetBucket> load_corpus(const std::string& dir);

}  // namespace ssa
