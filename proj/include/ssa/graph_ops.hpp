#pragma once

// Differentiable ops recorded on a Tape. Every op validates shapes eagerly and
// throws ShapeError naming both operands on mismatch.

#include "ssa/autodiff.hpp"
#include "ssa/kernels.hpp"

namespace ssa::ops {

/// 2-D convolution; `bias` may be an invalid Var for no bias. Weight (out, in, k, k), bias (1, out, 1, 1).
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var weight, Var bias, int stride, int padding);

/// Rows of x (rows, in, 1, 1) mapped through weight (out, in, 1, 1) and bias (1, out, 1, 1).
template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias);

template <typename T>
Var relu(Tape<T>& tape, Var x);

/// |x| with subgradient 0 at 0.
template <typename T>
Var abs(Tape<T>& tape, Var x);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);
template <typename T>
Var sub(Tape<T>& tape, Var a, Var b);
template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);
template <typename T>
Var div(Tape<T>& tape, Var a, Var b);

/// s * x
template <typename T>
Var scale(Tape<T>& tape, Var x, T s);
/// x + s
template <typename T>
Var add_scalar(Tape<T>& tape, Var x, T s);

/// Same data, new dims (element count must match).
template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape4 dims);

/// Mean of all elements, as a (1,1,1,1) tensor.
template <typename T>
Var mean(Tape<T>& tape, Var x);

/// Channel concatenation [a; b]; n, h, w must agree.
template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b);

template <typename T>
Var bicubic_resize(Tape<T>& tape, Var x, int out_h, int out_w);

/// Row-wise softmax of x viewed as (rows, k): x dims (rows, k, 1, 1).
template <typename T>
Var softmax_rows(Tape<T>& tape, Var x);

/// out[r, :] = sum_i weights[r, i] * candidates[r * k + i, :], with
/// candidates (rows*k, d, 1, 1) and weights (rows, k, 1, 1).
template <typename T>
Var group_weighted_sum(Tape<T>& tape, Var candidates, Var weights);

/// Reassembles per-pixel rows (H*W, d, 1, 1), pixel-major, into a (1, d, H, W) map.
template <typename T>
Var rows_to_map(Tape<T>& tape, Var rows, int height, int width);

/// Per-channel separable filtering with `window` (odd or even length) over
/// fully-contained windows only ("valid" mode).
template <typename T>
Var window_filter_valid(Tape<T>& tape, Var x, const std::vector<double>& window);

}  // namespace ssa::ops
