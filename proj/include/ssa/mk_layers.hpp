#pragma once

// Matryoshka Kernel (MK) layers: one nested convolution weight that serves
// any band count up to c_max by taking a contiguous channel prefix.
//
//   input layer : weight (D, c_max, k, k), bias (D)      -> slice input channels
//   output layer: weight (c_max, D, k, k), bias (c_max)  -> slice output channels
//
// Slicing is a prefix [0, C) along the band axis. When C == c_max the full
// weight is used unchanged. During training only the sliced prefix receives
// gradient, so bands >= C are untouched by a step with C bands.

#include <iosfwd>
#include <vector>

#include "ssa/autodiff.hpp"
#include "ssa/kernels.hpp"
#include "ssa/random.hpp"

namespace ssa {

template <typename T>
struct MKInputLayer {
    Parameter<T> weight;  // (d, c_max, k, k)
    Parameter<T> bias;    // (1, d, 1, 1)
    int d = 0;
    int c_max = 0;
    int k = 3;
    int stride = 1;
    int padding = 1;

    MKInputLayer() = default;
    /// Zero-initialised layer; throws ConfigError on d < 1, c_max < 1 or even k.
    MKInputLayer(std::string name, int d, int c_max, int k = 3, int stride = 1, int padding = 1);

    /// Fan-in-scaled uniform init over the full nested weight, fan-in = c_max * k * k.
    void init_uniform(Rng& rng);
};

template <typename T>
struct MKOutputLayer {
    Parameter<T> weight;  // (c_max, d, k, k)
    Parameter<T> bias;    // (1, c_max, 1, 1)
    int d = 0;
    int c_max = 0;
    int k = 3;
    int stride = 1;
    int padding = 1;

    MKOutputLayer() = default;
    MKOutputLayer(std::string name, int d, int c_max, int k = 3, int stride = 1, int padding = 1);

    /// Fan-in-scaled uniform init, fan-in = d * k * k.
    void init_uniform(Rng& rng);
};

/// W[:, :c_in] with the full bias. Throws ArgumentError naming c_in and c_max when out of range.
template <typename T>
BasicKernel4<T> slice_input_kernel(const MKInputLayer<T>& layer, int c_in);

/// W[:c_out] and bias[:c_out].
template <typename T>
BasicKernel4<T> slice_output_kernel(const MKOutputLayer<T>& layer, int c_out);

/// Convolution of x with the kernel sliced to x.c(). Throws BandOverflowError when x.c() > c_max.
template <typename T>
BasicTensor4<T> mk_input_forward(const MKInputLayer<T>& layer, const BasicTensor4<T>& x);

/// Convolution of y (d channels) with the kernel sliced to c_out output bands.
template <typename T>
BasicTensor4<T> mk_output_forward(const MKOutputLayer<T>& layer, const BasicTensor4<T>& y, int c_out);

// Differentiable variants; gradients flow only into the sliced prefix.
template <typename T>
Var mk_input_forward(Tape<T>& tape, MKInputLayer<T>& layer, Var x);

template <typename T>
Var mk_output_forward(Tape<T>& tape, MKOutputLayer<T>& layer, Var y, int c_out);

/// One CSV row per band slab: `layer,slab,v0,...,v{d*k*k-1}` where layer is
/// "input" or "output". Input slab c is W[:, c]; output slab c is W[c].
void write_kernel_slabs_csv(std::ostream& os, const MKInputLayer<float>& in, const MKOutputLayer<float>& out,
                            bool header = true);

struct KernelSlab {
    std::string layer;
    int slab = 0;
    std::vector<float> values;
};

/// Parses the format written by write_kernel_slabs_csv.
std::vector<KernelSlab> read_kernel_slabs_csv(std::istream& is);

}  // namespace ssa
