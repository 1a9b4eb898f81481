#include "ssa/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "binary_io.hpp"
#include "ssa/errors.hpp"
#include "ssa/kernels.hpp"

namespace fs = std::filesystem;

namespace ssa {

namespace {

constexpr int kSpatialComponents = 3;
constexpr int kWavesPerField = 6;
constexpr double kEnvelopeWidth = 0.35;
constexpr double kLuminanceShare = 0.4;

// Smooth field in [0, 1]: normalised sum of plane waves with period >= smoothness.
std::vector<double> smooth_field(Rng& rng, int H, int W, double smoothness) {
    struct Wave {
        double ky, kx, phase, amp;
    };
    std::vector<Wave> waves(kWavesPerField);
    double amp_sum = 0;
    for (auto& wv : waves) {
        const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        const double freq = std::isinf(smoothness) ? 0.0 : uniform(rng, 0.25, 1.0) / smoothness;
        wv.ky = 2.0 * std::numbers::pi * freq * std::cos(theta);
        wv.kx = 2.0 * std::numbers::pi * freq * std::sin(theta);
        wv.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        wv.amp = uniform(rng, 0.5, 1.0);
        amp_sum += wv.amp;
    }
    std::vector<double> f(static_cast<std::size_t>(H) * W);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            double acc = 0;
            for (const auto& wv : waves) acc += wv.amp * std::cos(wv.ky * i + wv.kx * j + wv.phase);
            f[static_cast<std::size_t>(i) * W + j] = 0.5 + 0.5 * acc / amp_sum;
        }
    }
    return f;
}

// Reflect-101 index: ... 2 1 | 0 1 2 ... n-1 | n-2 ...
int reflect101(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i >= n ? period - i : i;
}

// Blur one plane with a separable window at the requested output rows/columns.
// Each sample is formed as centre + sum w_k (tap_k - centre) so constants pass through exactly.
std::vector<double> blur_at(std::span<const float> src, int H, int W, const std::vector<double>& win_y,
                            const std::vector<double>& win_x, const std::vector<int>& rows,
                            const std::vector<int>& cols) {
    const int ry = static_cast<int>(win_y.size()) / 2;
    const int rx = static_cast<int>(win_x.size()) / 2;
    const int ow = static_cast<int>(cols.size());
    std::vector<double> tmp(static_cast<std::size_t>(H) * ow);
    for (int i = 0; i < H; ++i) {
        const float* row = src.data() + static_cast<std::size_t>(i) * W;
        for (int j = 0; j < ow; ++j) {
            const double centre = row[cols[j]];
            double acc = 0;
            for (int k = -rx; k <= rx; ++k) acc += win_x[k + rx] * (row[reflect101(cols[j] + k, W)] - centre);
            tmp[static_cast<std::size_t>(i) * ow + j] = centre + acc;
        }
    }
    std::vector<double> out(rows.size() * cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int j = 0; j < ow; ++j) {
            const double centre = tmp[static_cast<std::size_t>(rows[i]) * ow + j];
            double acc = 0;
            for (int k = -ry; k <= ry; ++k) {
                acc += win_y[k + ry] * (tmp[static_cast<std::size_t>(reflect101(rows[i] + k, H)) * ow + j] - centre);
            }
            out[i * ow + j] = centre + acc;
        }
    }
    return out;
}

std::vector<double> blur_window(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    return gaussian_window(2 * radius + 1, sigma);
}

std::vector<int> iota_range(int n, int step = 1, int offset = 0) {
    std::vector<int> v(n);
    for (int i = 0; i < n; ++i) v[i] = i * step + offset;
    return v;
}

Tensor4 blur_sample(const Tensor4& x, const std::vector<double>& win_y, const std::vector<double>& win_x,
                    const std::vector<int>& rows, const std::vector<int>& cols) {
    Tensor4 out(Shape4{x.n(), x.c(), static_cast<int>(rows.size()), static_cast<int>(cols.size())});
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const auto v = blur_at(x.plane(n, c), x.h(), x.w(), win_y, win_x, rows, cols);
            auto dst = out.plane(n, c);
            for (std::size_t i = 0; i < v.size(); ++i) dst[i] = static_cast<float>(v[i]);
        }
    }
    return out;
}

std::string format_scale(double s) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", s);
    return buf;
}

}  // namespace

Tensor4 synth_ground_truth(std::uint64_t seed, int bands, int height, int width, double smoothness) {
    if (bands < 1 || height < 1 || width < 1) throw ArgumentError("synth_ground_truth: C, H, W must be >= 1");
    if (!(smoothness > 0.0)) throw ArgumentError("synth_ground_truth: smoothness must be positive");
    Rng rng(seed);
    const auto luminance = smooth_field(rng, height, width, smoothness);
    std::vector<std::vector<double>> fields;
    std::vector<double> centres;
    for (int k = 0; k < kSpatialComponents; ++k) {
        fields.push_back(smooth_field(rng, height, width, smoothness));
        centres.push_back(uniform01(rng));
    }
    const double bright_freq = uniform(rng, 0.3, 1.0);
    const double bright_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);

    Tensor4 out(Shape4{1, bands, height, width});
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (int c = 0; c < bands; ++c) {
        const double t = bands == 1 ? 0.0 : static_cast<double>(c) / (bands - 1);
        std::vector<double> env(kSpatialComponents);
        double env_sum = 0;
        for (int k = 0; k < kSpatialComponents; ++k) {
            const double d = (t - centres[k]) / kEnvelopeWidth;
            env[k] = std::exp(-0.5 * d * d);
            env_sum += env[k];
        }
        const double brightness =
            0.35 + 0.25 * (1.0 + std::sin(2.0 * std::numbers::pi * bright_freq * t + bright_phase));
        auto dst = out.plane(0, c);
        for (std::size_t p = 0; p < plane; ++p) {
            double mix = 0;
            for (int k = 0; k < kSpatialComponents; ++k) mix += env[k] * fields[k][p];
            const double v = kLuminanceShare * luminance[p] + (1.0 - kLuminanceShare) * mix / env_sum;
            dst[p] = static_cast<float>(std::clamp(brightness * v, 0.0, 1.0));
        }
    }
    return out;
}

Tensor4 anti_alias_downsample(const Tensor4& x, int s) {
    if (s < 2) throw ArgumentError("anti_alias_downsample: factor must be >= 2, got " + std::to_string(s));
    if (x.h() % s != 0 || x.w() % s != 0) {
        throw ArgumentError("anti_alias_downsample: dims " + to_string(x.dims()) + " not divisible by " +
                            std::to_string(s));
    }
    const auto win = blur_window(s / 2.0);
    const int off = (s - 1) / 2;
    return blur_sample(x, win, win, iota_range(x.h() / s, s, off), iota_range(x.w() / s, s, off));
}

Tensor4 anti_alias_resample(const Tensor4& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ArgumentError("anti_alias_resample: output size must be positive");
    const double ry = static_cast<double>(x.h()) / out_h;
    const double rx = static_cast<double>(x.w()) / out_w;
    const auto win_y = blur_window(std::max(ry, 1.0) / 2.0);
    const auto win_x = blur_window(std::max(rx, 1.0) / 2.0);
    const auto blurred = blur_sample(x, win_y, win_x, iota_range(x.h()), iota_range(x.w()));
    return bicubic_resize(blurred, out_h, out_w);
}

SRFMatrix synth_srf(int bands, int msi_bands) {
    if (msi_bands < 1 || bands < 1) throw ArgumentError("synth_srf: band counts must be >= 1");
    if (msi_bands > bands) {
        throw ArgumentError("synth_srf: c = " + std::to_string(msi_bands) + " exceeds C = " + std::to_string(bands));
    }
    SRFMatrix m;
    m.rows = msi_bands;
    m.cols = bands;
    m.weights.assign(static_cast<std::size_t>(bands) * msi_bands, 0.0);
    const int base = bands / msi_bands;
    const int extra = bands % msi_bands;
    int start = 0;
    for (int r = 0; r < msi_bands; ++r) {
        const int size = base + (r < extra ? 1 : 0);
        for (int c = start; c < start + size; ++c) m.weights[static_cast<std::size_t>(r) * bands + c] = 1.0 / size;
        start += size;
    }
    return m;
}

Tensor4 apply_srf(const SRFMatrix& srf, const Tensor4& x) {
    if (srf.cols != x.c()) {
        throw ShapeError("apply_srf: SRF has " + std::to_string(srf.cols) + " columns but input has " +
                         std::to_string(x.c()) + " bands");
    }
    Tensor4 out(Shape4{x.n(), srf.rows, x.h(), x.w()});
    const std::size_t plane = x.dims().plane();
    for (int n = 0; n < x.n(); ++n) {
        for (int r = 0; r < srf.rows; ++r) {
            int ref = -1;
            for (int c = 0; c < srf.cols && ref < 0; ++c) {
                if (srf.at(r, c) != 0.0) ref = c;
            }
            auto dst = out.plane(n, r);
            if (ref < 0) {
                std::fill(dst.begin(), dst.end(), 0.0f);
                continue;
            }
            // Rows sum to 1, so evaluate relative to the first supported band.
            const auto base = x.plane(n, ref);
            for (std::size_t p = 0; p < plane; ++p) {
                double acc = 0;
                for (int c = ref + 1; c < srf.cols; ++c) {
                    const double wgt = srf.at(r, c);
                    if (wgt != 0.0) acc += wgt * (static_cast<double>(x.plane(n, c)[p]) - base[p]);
                }
                dst[p] = static_cast<float>(base[p] + acc);
            }
        }
    }
    return out;
}

FusionSample wald_simulate(const Tensor4& x_hr, int s, const SRFMatrix& srf, const std::string& dataset_id) {
    if (x_hr.n() != 1) throw ShapeError("wald_simulate: expected a single image, got " + to_string(x_hr.dims()));
    FusionSample out;
    out.y_lr = anti_alias_downsample(x_hr, s);
    out.z_hr = apply_srf(srf, x_hr);
    out.x_hr = x_hr;
    out.scale = s;
    out.dataset_id = dataset_id;
    return out;
}

FusionSample wald_simulate_to(const Tensor4& x_hr, int lr_h, int lr_w, const SRFMatrix& srf,
                              const std::string& dataset_id) {
    if (x_hr.n() != 1) throw ShapeError("wald_simulate_to: expected a single image, got " + to_string(x_hr.dims()));
    if (lr_h > x_hr.h() || lr_w > x_hr.w()) throw ArgumentError("wald_simulate_to: LR size exceeds HR size");
    FusionSample out;
    out.y_lr = anti_alias_resample(x_hr, lr_h, lr_w);
    out.z_hr = apply_srf(srf, x_hr);
    out.x_hr = x_hr;
    out.scale = static_cast<double>(x_hr.h()) / lr_h;
    out.dataset_id = dataset_id;
    return out;
}

FusionSample simulate_at_scale(const Tensor4& x_hr, double r, const SRFMatrix& srf, const std::string& dataset_id) {
    if (!(r >= 1.0)) throw ArgumentError("simulate_at_scale: ratio must be >= 1");
    const int s = static_cast<int>(std::lround(r));
    if (static_cast<double>(s) == r && s >= 2 && x_hr.h() % s == 0 && x_hr.w() % s == 0) {
        return wald_simulate(x_hr, s, srf, dataset_id);
    }
    const int lr_h = std::max(1, static_cast<int>(std::lround(x_hr.h() / r)));
    const int lr_w = std::max(1, static_cast<int>(std::lround(x_hr.w() / r)));
    return wald_simulate_to(x_hr, lr_h, lr_w, srf, dataset_id);
}

std::vector<Tensor4> extract_patches(const Tensor4& x, int patch, int stride) {
    if (stride < 1) throw ArgumentError("extract_patches: stride must be >= 1");
    if (patch < 1 || patch > x.h() || patch > x.w()) {
        throw ArgumentError("extract_patches: patch " + std::to_string(patch) + " does not fit in " +
                            to_string(x.dims()));
    }
    std::vector<Tensor4> out;
    for (int i0 = 0; i0 + patch <= x.h(); i0 += stride) {
        for (int j0 = 0; j0 + patch <= x.w(); j0 += stride) {
            Tensor4 p(Shape4{x.n(), x.c(), patch, patch});
            for (int n = 0; n < x.n(); ++n) {
                for (int c = 0; c < x.c(); ++c) {
                    for (int i = 0; i < patch; ++i) {
                        for (int j = 0; j < patch; ++j) p.at(n, c, i, j) = x.at(n, c, i0 + i, j0 + j);
                    }
                }
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

void DatasetBucket::add(FusionSample s) {
    const auto& xd = s.x_hr.dims();
    if (samples.empty() && bands == 0) {
        bands = xd.c;
        msi_bands = s.z_hr.c();
        scale = s.scale;
        patch_h = xd.h;
        patch_w = xd.w;
    }
    if (xd.c != bands || s.y_lr.c() != bands || s.z_hr.c() != msi_bands || s.scale != scale || xd.h != patch_h ||
        xd.w != patch_w || s.z_hr.h() != patch_h || s.z_hr.w() != patch_w) {
        throw ShapeError("bucket '" + dataset_id + "': sample " + to_string(xd) + " does not match bucket signature");
    }
    if (!samples.empty() && !(s.y_lr.dims() == samples.front().y_lr.dims())) {
        throw ShapeError("bucket '" + dataset_id + "': LR dims " + to_string(s.y_lr.dims()) + " differ");
    }
    s.dataset_id = dataset_id;
    samples.push_back(std::move(s));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ a) ^ b);
}

DatasetBucket build_bucket(const BucketSpec& spec, std::uint64_t seed) {
    if (spec.msi_bands > spec.bands) {
        throw ConfigError("bucket '" + spec.dataset_id + "': c = " + std::to_string(spec.msi_bands) + " exceeds C = " +
                          std::to_string(spec.bands));
    }
    if (spec.patch % spec.scale != 0) {
        throw ConfigError("bucket '" + spec.dataset_id + "': patch " + std::to_string(spec.patch) +
                          " not divisible by scale " + std::to_string(spec.scale));
    }
    DatasetBucket b;
    b.dataset_id = spec.dataset_id;
    const auto srf = synth_srf(spec.bands, spec.msi_bands);
    std::uint64_t tag = 0;
    for (char ch : spec.dataset_id) tag = tag * 131 + static_cast<unsigned char>(ch);
    for (int img = 0; img < spec.images; ++img) {
        const auto gt = synth_ground_truth(derive_seed(seed, tag, static_cast<std::uint64_t>(img)), spec.bands,
                                           spec.image_size, spec.image_size, spec.smoothness);
        for (auto& p : extract_patches(gt, spec.patch, spec.stride)) b.add(wald_simulate(p, spec.scale, srf));
    }
    return b;
}

Tensor4 held_out_patch(const BucketSpec& spec, std::uint64_t seed, int index) {
    std::uint64_t tag = 0;
    for (char ch : spec.dataset_id) tag = tag * 131 + static_cast<unsigned char>(ch);
    const std::uint64_t stream = derive_seed(seed ^ 0xC0FFEE5EEDull, tag, static_cast<std::uint64_t>(index));
    return synth_ground_truth(stream, spec.bands, spec.patch, spec.patch, spec.smoothness);
}

Minibatch sample_minibatch(const std::vector<DatasetBucket>& buckets, Rng& rng, int batch_size) {
    if (buckets.empty()) throw ConfigError("sample_minibatch: no buckets");
    if (batch_size < 1) throw ConfigError("sample_minibatch: batch size must be >= 1");
    for (const auto& b : buckets) {
        if (b.samples.empty()) throw ConfigError("sample_minibatch: bucket '" + b.dataset_id + "' is empty");
    }
    Minibatch mb;
    mb.bucket = static_cast<std::size_t>(uniform_index(rng, buckets.size()));
    const auto& samples = buckets[mb.bucket].samples;
    mb.samples.reserve(batch_size);
    for (int i = 0; i < batch_size; ++i) mb.samples.push_back(&samples[uniform_index(rng, samples.size())]);
    return mb;
}

bool is_homogeneous(const Minibatch& batch) {
    if (batch.samples.empty()) return true;
    const auto& f = *batch.samples.front();
    return std::all_of(batch.samples.begin(), batch.samples.end(), [&](const FusionSample* s) {
        return s->y_lr.dims() == f.y_lr.dims() && s->z_hr.dims() == f.z_hr.dims() && s->x_hr.dims() == f.x_hr.dims() &&
               s->scale == f.scale;
    });
}

// ---------------------------------------------------------------------------

void write_tensor(const std::string& path, const Tensor4& x) {
    std::vector<char> bytes;
    bytes.reserve(32 + 4 * x.size());
    bytes.insert(bytes.end(), {'H', 'S', 'T', '1'});
    detail::put_u32(bytes, 1);
    for (int d : {x.n(), x.c(), x.h(), x.w()}) detail::put_u32(bytes, static_cast<std::uint32_t>(d));
    detail::put_u64(bytes, 0);
    for (float v : x.values()) detail::put_f32(bytes, v);
    detail::write_file_bytes(path, bytes);
}

Tensor4 read_tensor(const std::string& path) {
    const auto bytes = detail::read_file_bytes(path);
    detail::ByteReader rd(bytes, path);
    if (rd.bytes(4) != "HST1") rd.fail("bad magic (expected HST1)", 0);
    if (const auto v = rd.u32(); v != 1) rd.fail("unsupported version " + std::to_string(v), 4);
    Shape4 d;
    d.n = static_cast<int>(rd.u32());
    d.c = static_cast<int>(rd.u32());
    d.h = static_cast<int>(rd.u32());
    d.w = static_cast<int>(rd.u32());
    if (d.n < 1 || d.c < 1 || d.h < 1 || d.w < 1) rd.fail("invalid dims " + to_string(d), 8);
    if (rd.u64() != 0) rd.fail("reserved bytes are not zero", 24);
    const std::size_t count = d.numel();
    if (count > rd.remaining() / 4) rd.fail("truncated data: need " + std::to_string(4 * count) + " bytes", 32);
    if (rd.remaining() != 4 * count) rd.fail("trailing bytes after data", 32 + 4 * count);
    Tensor4 out(d);
    for (std::size_t i = 0; i < count; ++i) out[i] = rd.f32();
    return out;
}

void write_bucket(const std::string& dir, const DatasetBucket& bucket) {
    const fs::path root(dir);
    const fs::path sub = root / bucket.dataset_id;
    std::error_code ec;
    fs::create_directories(sub, ec);
    if (ec) throw Error("cannot create directory '" + sub.string() + "': " + ec.message());
    std::ostringstream man;
    man << "# dataset_id\tC\tc\tscale\ty_lr\tz_hr\tx_hr\n";
    for (std::size_t i = 0; i < bucket.samples.size(); ++i) {
        const auto& s = bucket.samples[i];
        char stem[32];
        std::snprintf(stem, sizeof stem, "%05zu", i);
        const std::string y = bucket.dataset_id + "/" + stem + "_y.hst";
        const std::string z = bucket.dataset_id + "/" + stem + "_z.hst";
        const std::string x = bucket.dataset_id + "/" + stem + "_x.hst";
        write_tensor((root / y).string(), s.y_lr);
        write_tensor((root / z).string(), s.z_hr);
        write_tensor((root / x).string(), s.x_hr);
        man << bucket.dataset_id << '\t' << bucket.bands << '\t' << bucket.msi_bands << '\t'
            << format_scale(bucket.scale) << '\t' << y << '\t' << z << '\t' << x << '\n';
    }
    const fs::path mpath = root / (bucket.dataset_id + ".manifest");
    std::ofstream out(mpath);
    if (!out) throw Error("cannot open '" + mpath.string() + "' for writing");
    out << man.str();
    if (!out) throw Error("write to '" + mpath.string() + "' failed");
}

DatasetBucket read_bucket(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw Error("cannot open manifest '" + manifest_path + "'");
    const fs::path root = fs::path(manifest_path).parent_path();
    DatasetBucket b;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string tok; std::getline(ss, tok, '\t');) f.push_back(tok);
        auto bad = [&](const std::string& why) {
            return FormatError(manifest_path + ":" + std::to_string(lineno) + ": " + why);
        };
        if (f.size() != 7) throw bad("expected 7 tab-separated fields, got " + std::to_string(f.size()));
        FusionSample s;
        int C = 0, c = 0;
        try {
            C = std::stoi(f[1]);
            c = std::stoi(f[2]);
            s.scale = std::stod(f[3]);
        } catch (const std::exception&) {
            throw bad("malformed numeric field");
        }
        if (b.dataset_id.empty()) b.dataset_id = f[0];
        if (f[0] != b.dataset_id) throw bad("mixed dataset ids '" + b.dataset_id + "' and '" + f[0] + "'");
        s.y_lr = read_tensor((root / f[4]).string());
        s.z_hr = read_tensor((root / f[5]).string());
        s.x_hr = read_tensor((root / f[6]).string());
        if (s.x_hr.c() != C || s.z_hr.c() != c) throw bad("band counts disagree with tensor files");
        b.add(std::move(s));
    }
    if (b.samples.empty()) throw FormatError(manifest_path + ": manifest lists no samples");
    return b;
}

std::vector<DatasetBucket> load_corpus(const std::string& dir) {
    std::vector<fs::path> manifests;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(dir, ec)) {
        if (e.is_regular_file() && e.path().extension() == ".manifest") manifests.push_back(e.path());
    }
    if (ec) throw Error("cannot list '" + dir + "': " + ec.message());
    if (manifests.empty()) throw Error("no *.manifest files found in '" + dir + "'");
    std::sort(manifests.begin(), manifests.end());
    std::vector<DatasetBucket> out;
    for (const auto& m : manifests) out.push_back(read_bucket(m.string()));
    return out;
}

}  // namespace ssa
