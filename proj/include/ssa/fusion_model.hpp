#pragma once

// Band- and scale-agnostic fusion network.
//
//   E_pe = enc_spe(mk_in(Y_lr))                    spectral latent, LR grid
//   E_pa = enc_spa(mk_in([bicubic(Y_lr); Z_hr]))   spatial latent, HR grid
//   for every HR pixel p and each of its 4 nearest LR grid points q_i:
//       cand_i = MLP(E_pe[q_i], E_pa[p], p - q_i),  w_i = head(cand_i)
//   residual = mk_out(sum_i softmax(w)_i cand_i, C)
//   output   = bicubic(Y_lr) + residual

#include <array>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ssa/autodiff.hpp"
#include "ssa/mk_layers.hpp"
#include "ssa/random.hpp"

namespace ssa {

struct ModelConfig {
    int d_feat = 64;
    int c_max = 40;
    int enc_spe_depth = 2;
    int enc_spa_depth = 2;
    int decoder_hidden = 256;
    int decoder_layers = 4;  // hidden layers of the decoder MLP

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct ConvParams {
    Parameter<T> weight;  // (out, in, k, k)
    Parameter<T> bias;    // (1, out, 1, 1)
};

template <typename T>
struct LinearParams {
    Parameter<T> weight;  // (out, in, 1, 1)
    Parameter<T> bias;    // (1, out, 1, 1)
};

/// EDSR-style body: head conv, `depth` residual blocks (conv-relu-conv + skip),
/// tail conv, and a long skip from the head output. Preserves (h, w) and width.
template <typename T>
struct ResidualEncoder {
    ConvParams<T> head;
    std::vector<std::array<ConvParams<T>, 2>> blocks;
    ConvParams<T> tail;
};

template <typename T>
class FusionModel {
public:
    FusionModel() = default;
    /// All parameters zero. Call init() for a trainable start.
    explicit FusionModel(const ModelConfig& cfg);

    /// Fan-in-scaled uniform init of every parameter, drawn in parameters() order.
    void init(Rng& rng);

    const ModelConfig& config() const noexcept { return cfg_; }

    /// Every trainable tensor in a fixed order (the checkpoint order).
    std::vector<Parameter<T>*> parameters();
    std::vector<const Parameter<T>*> parameters() const;
    Parameter<T>* find(const std::string& name);

    void zero_grad();

    /// Converts every parameter to another scalar type (e.g. double for gradient checks).
    template <typename U>
    FusionModel<U> cast() const;

    MKInputLayer<T> mk_in;
    ResidualEncoder<T> enc_spe;
    ResidualEncoder<T> enc_spa;
    std::vector<LinearParams<T>> decoder;
    LinearParams<T> weight_head;
    MKOutputLayer<T> mk_out;

private:
    ModelConfig cfg_{};
};

using Model = FusionModel<float>;

/// Corner-aligned map of pixel (i, j) of an H x W grid to [-1, 1]^2.
/// A grid axis of extent 1 maps to 0. Throws ArgumentError when out of range.
std::array<double, 2> normalize_coords(int i, int j, int height, int width);

struct QueryPoint {
    std::array<double, 2> p{};
    std::array<std::array<int, 2>, 4> neighbors{};  // LR (row, col), order: (fl,fl), (fl,ce), (ce,fl), (ce,ce)
    std::array<std::array<double, 2>, 4> offsets{};  // p - q_i in normalized units
};

/// The four LR grid points around p (floor/ceil in continuous LR index space, clamped).
QueryPoint nearest_lr_neighbors(std::array<double, 2> p, int lr_h, int lr_w);

/// A query together with the HR pixel whose spatial latent it reads.
struct DecodeQuery {
    QueryPoint query;
    int hr_i = 0;
    int hr_j = 0;
};

/// Queries for every pixel of an H x W output over an h x w LR grid, row-major.
std::vector<DecodeQuery> make_queries(int hr_h, int hr_w, int lr_h, int lr_w);

template <typename T>
struct DecodeOutput {
    Var features;  // (Q, d_feat, 1, 1)
    Var weights;   // (Q, 4, 1, 1), softmax ensemble weights
};

/// Decoder + 4-neighbor softmax ensemble for a list of queries.
template <typename T>
DecodeOutput<T> decode_queries(Tape<T>& tape, FusionModel<T>& model, Var e_pe, Var e_pa,
                               std::span<const DecodeQuery> queries);

/// Residual feature vector (length d_feat) at one HR pixel.
template <typename T>
std::vector<T> decode_residual(const FusionModel<T>& model, const BasicTensor4<T>& e_pe,
                               const BasicTensor4<T>& e_pa, const QueryPoint& query, std::array<int, 2> hr_pixel);

template <typename T>
Var encode(Tape<T>& tape, ResidualEncoder<T>& enc, Var x);

template <typename T>
struct FuseTrace {
    Var output;    // (1, C, H, W)
    Var base;      // bicubic(Y_lr)
    Var residual;  // mk_out(...)
    Var e_pe;
    Var e_pa;
    Var ensemble_weights;
};

/// Differentiable fusion. y_lr (1, C, h, w), z_hr (1, c, H, W) with H >= h, W >= w.
/// Throws BandOverflowError when C > c_max or C + c > c_max, UnsupportedScaleError when downscaling.
template <typename T>
FuseTrace<T> fuse(Tape<T>& tape, FusionModel<T>& model, Var y_lr, Var z_hr);

/// Inference-only fusion.
template <typename T>
BasicTensor4<T> fuse(const FusionModel<T>& model, const BasicTensor4<T>& y_lr, const BasicTensor4<T>& z_hr);

// ---------------------------------------------------------------------------
// Checkpoint container: "SSACKPT1" magic, a text metadata block, a manifest
// of (name, dims, byte offset), then raw little-endian float32 data.

struct CheckpointFile {
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::pair<std::string, Tensor4>> tensors;

    const std::string* find_meta(const std::string& key) const;
    const Tensor4* find_tensor(const std::string& name) const;
};

void write_checkpoint_file(const std::string& path, const CheckpointFile& ckpt);
/// Reads and validates the whole file before returning; throws FormatError with a byte offset on damage.
CheckpointFile read_checkpoint_file(const std::string& path);

/// Model config as metadata pairs ("model.d_feat" etc.) and back.
void append_model_meta(const ModelConfig& cfg, CheckpointFile& ckpt);
ModelConfig model_config_from_meta(const CheckpointFile& ckpt);

void append_model_tensors(const Model& model, CheckpointFile& ckpt);
/// Builds a model from the config + parameter entries of a checkpoint.
Model model_from_checkpoint(const CheckpointFile& ckpt);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace ssa
