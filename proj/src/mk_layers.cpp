#include "ssa/mk_layers.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "ssa/graph_ops.hpp"

namespace ssa {

namespace {

void check_layer_config(int d, int c_max, int k) {
    if (d < 1) throw ConfigError("MK layer: feature width must be >= 1, got " + std::to_string(d));
    if (c_max < 1) throw ConfigError("MK layer: c_max must be >= 1, got " + std::to_string(c_max));
    if (k < 1 || k % 2 == 0) throw ConfigError("MK layer: kernel size must be odd, got " + std::to_string(k));
}

template <typename T>
void fill_uniform(BasicTensor4<T>& t, Rng& rng, double bound) {
    for (T& v : t.values()) v = static_cast<T>(uniform(rng, -bound, bound));
}

void check_band_range(int c, int c_max, const char* what) {
    if (c < 1 || c > c_max) {
        throw ArgumentError(std::string(what) + ": band count " + std::to_string(c) + " outside [1, c_max=" +
                            std::to_string(c_max) + "]");
    }
}

}  // namespace

template <typename T>
MKInputLayer<T>::MKInputLayer(std::string name, int d_, int c_max_, int k_, int stride_, int padding_)
    : d(d_), c_max(c_max_), k(k_), stride(stride_), padding(padding_) {
    check_layer_config(d, c_max, k);
    weight = Parameter<T>(name + ".weight", BasicTensor4<T>(d, c_max, k, k));
    bias = Parameter<T>(name + ".bias", BasicTensor4<T>(1, d, 1, 1));
}

template <typename T>
void MKInputLayer<T>::init_uniform(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_max) * k * k);
    fill_uniform(weight.value, rng, bound);
    fill_uniform(bias.value, rng, bound);
}

template <typename T>
MKOutputLayer<T>::MKOutputLayer(std::string name, int d_, int c_max_, int k_, int stride_, int padding_)
    : d(d_), c_max(c_max_), k(k_), stride(stride_), padding(padding_) {
    check_layer_config(d, c_max, k);
    weight = Parameter<T>(name + ".weight", BasicTensor4<T>(c_max, d, k, k));
    bias = Parameter<T>(name + ".bias", BasicTensor4<T>(1, c_max, 1, 1));
}

template <typename T>
void MKOutputLayer<T>::init_uniform(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d) * k * k);
    fill_uniform(weight.value, rng, bound);
    fill_uniform(bias.value, rng, bound);
}

template <typename T>
BasicKernel4<T> slice_input_kernel(const MKInputLayer<T>& layer, int c_in) {
    check_band_range(c_in, layer.c_max, "slice_input_kernel");
    BasicKernel4<T> k;
    k.weight = c_in == layer.c_max ? layer.weight.value : slice_prefix(layer.weight.value, 1, c_in);
    k.bias.assign(layer.bias.value.values().begin(), layer.bias.value.values().end());
    return k;
}

template <typename T>
BasicKernel4<T> slice_output_kernel(const MKOutputLayer<T>& layer, int c_out) {
    check_band_range(c_out, layer.c_max, "slice_output_kernel");
    BasicKernel4<T> k;
    k.weight = c_out == layer.c_max ? layer.weight.value : slice_prefix(layer.weight.value, 0, c_out);
    k.bias.assign(layer.bias.value.values().begin(), layer.bias.value.values().begin() + c_out);
    return k;
}

template <typename T>
BasicTensor4<T> mk_input_forward(const MKInputLayer<T>& layer, const BasicTensor4<T>& x) {
    if (x.c() > layer.c_max) {
        throw BandOverflowError("input has " + std::to_string(x.c()) + " bands but the nested kernel holds c_max=" +
                                std::to_string(layer.c_max));
    }
    return conv2d_forward(x, slice_input_kernel(layer, x.c()), layer.stride, layer.padding);
}

template <typename T>
BasicTensor4<T> mk_output_forward(const MKOutputLayer<T>& layer, const BasicTensor4<T>& y, int c_out) {
    if (y.c() != layer.d) {
        throw ShapeError("mk_output_forward: feature map " + to_string(y.dims()) + " does not have d=" +
                         std::to_string(layer.d) + " channels");
    }
    return conv2d_forward(y, slice_output_kernel(layer, c_out), layer.stride, layer.padding);
}

template <typename T>
Var mk_input_forward(Tape<T>& tape, MKInputLayer<T>& layer, Var x) {
    const int c = tape.value(x).c();
    if (c > layer.c_max) {
        throw BandOverflowError("input has " + std::to_string(c) + " bands but the nested kernel holds c_max=" +
                                std::to_string(layer.c_max));
    }
    check_band_range(c, layer.c_max, "mk_input_forward");
    Var w = c == layer.c_max ? tape.parameter(layer.weight) : tape.parameter_prefix(layer.weight, 1, c);
    Var b = tape.parameter(layer.bias);
    return ops::conv2d(tape, x, w, b, layer.stride, layer.padding);
}

template <typename T>
Var mk_output_forward(Tape<T>& tape, MKOutputLayer<T>& layer, Var y, int c_out) {
    const auto& yv = tape.value(y);
    if (yv.c() != layer.d) {
        throw ShapeError("mk_output_forward: feature map " + to_string(yv.dims()) + " does not have d=" +
                         std::to_string(layer.d) + " channels");
    }
    check_band_range(c_out, layer.c_max, "mk_output_forward");
    Var w, b;
    if (c_out == layer.c_max) {
        w = tape.parameter(layer.weight);
        b = tape.parameter(layer.bias);
    } else {
        w = tape.parameter_prefix(layer.weight, 0, c_out);
        b = tape.parameter_prefix(layer.bias, 1, c_out);
    }
    return ops::conv2d(tape, y, w, b, layer.stride, layer.padding);
}

void write_kernel_slabs_csv(std::ostream& os, const MKInputLayer<float>& in, const MKOutputLayer<float>& out,
                            bool header) {
    const int kk = in.k * in.k;
    if (header) {
        os << "layer,slab";
        for (int i = 0; i < in.d * kk; ++i) os << ",v" << i;
        os << '\n';
    }
    std::ostringstream buf;
    buf.precision(std::numeric_limits<float>::max_digits10);
    const auto& wi = in.weight.value;
    for (int c = 0; c < in.c_max; ++c) {
        buf << "input," << c;
        for (int d = 0; d < in.d; ++d) {
            for (int m = 0; m < in.k; ++m) {
                for (int q = 0; q < in.k; ++q) buf << ',' << wi.at(d, c, m, q);
            }
        }
        buf << '\n';
    }
    const auto& wo = out.weight.value;
    for (int c = 0; c < out.c_max; ++c) {
        buf << "output," << c;
        for (std::size_t i = 0; i < static_cast<std::size_t>(out.d) * out.k * out.k; ++i) {
            buf << ',' << wo[wo.index(c, 0, 0, 0) + i];
        }
        buf << '\n';
    }
    os << buf.str();
}

std::vector<KernelSlab> read_kernel_slabs_csv(std::istream& is) {
    std::vector<KernelSlab> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line.rfind("layer,", 0) == 0) continue;
        std::istringstream ls(line);
        KernelSlab slab;
        std::string field;
        if (!std::getline(ls, slab.layer, ',') || !std::getline(ls, field, ',')) {
            throw FormatError("kernel CSV line " + std::to_string(lineno) + ": missing layer/slab fields");
        }
        try {
            slab.slab = std::stoi(field);
            while (std::getline(ls, field, ',')) slab.values.push_back(std::stof(field));
        } catch (const std::logic_error&) {
            throw FormatError("kernel CSV line " + std::to_string(lineno) + ": bad number '" + field + "'");
        }
        rows.push_back(std::move(slab));
    }
    return rows;
}

#define SSA_INSTANTIATE_MK(T)                                                                   \
    template struct MKInputLayer<T>;                                                           \
    template struct MKOutputLayer<T>;                                                          \
    template BasicKernel4<T> slice_input_kernel(const MKInputLayer<T>&, int);                  \
    template BasicKernel4<T> slice_output_kernel(const MKOutputLayer<T>&, int);                \
    template BasicTensor4<T> mk_input_forward(const MKInputLayer<T>&, const BasicTensor4<T>&); \
    template BasicTensor4<T> mk_output_forward(const MKOutputLayer<T>&, const BasicTensor4<T>&, int); \
    template Var mk_input_forward(Tape<T>&, MKInputLayer<T>&, Var);                             \
    template Var mk_output_forward(Tape<T>&, MKOutputLayer<T>&, Var, int);

SSA_INSTANTIATE_MK(float)
SSA_INSTANTIATE_MK(double)

}  // namespace ssa
