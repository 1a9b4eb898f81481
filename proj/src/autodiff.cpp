#include "ssa/autodiff.hpp"

#include <algorithm>
#include <array>

namespace ssa {

template <typename T>
Parameter<T>::Parameter(std::string name_, BasicTensor4<T> value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.dims()), touched(value.size(), 0) {}

template <typename T>
void Parameter<T>::zero_grad() {
    if (grad.dims() != value.dims()) grad = BasicTensor4<T>(value.dims());
    grad.fill(T(0));
    touched.assign(value.size(), 0);
}

template <typename T>
bool Parameter<T>::any_touched() const noexcept {
    return std::any_of(touched.begin(), touched.end(), [](std::uint8_t t) { return t != 0; });
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw StateError("invalid tape handle " + std::to_string(v.id));
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
    return const_cast<Node&>(static_cast<const Tape&>(*this).node(v));
}

template <typename T>
Var Tape<T>::push(Tensor value, bool requires_grad, BackwardFn fn) {
    if (replayed_) throw StateError("tape already replayed; record a new forward pass on a fresh tape");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::constant(Tensor value) {
    return push(std::move(value), false, {});
}

template <typename T>
Var Tape<T>::variable(Tensor value) {
    return push(std::move(value), true, {});
}

template <typename T>
Var Tape<T>::parameter(Parameter<T>& p) {
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(p.value, true, [self, param = &p](Tape& tape) {
        const Tensor& g = tape.node(self).grad;
        if (param->grad.dims() != param->value.dims()) param->zero_grad();
        for (std::size_t i = 0; i < g.size(); ++i) param->grad[i] += g[i];
        std::fill(param->touched.begin(), param->touched.end(), std::uint8_t{1});
    });
}

template <typename T>
Var Tape<T>::parameter_prefix(Parameter<T>& p, int axis, int count) {
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(slice_prefix(p.value, axis, count), true, [self, axis, param = &p](Tape& tape) {
        if (param->grad.dims() != param->value.dims()) param->zero_grad();
        accumulate_prefix(param->grad, tape.node(self).grad, axis, &param->touched);
    });
}

template <typename T>
Var Tape<T>::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (Var in : inputs) {
        if (in.valid() && node(in).requires_grad) needs = true;
    }
    return push(std::move(value), needs, std::move(fn));
}

template <typename T>
const BasicTensor4<T>& Tape<T>::value(Var v) const {
    return node(v).value;
}

template <typename T>
bool Tape<T>::requires_grad(Var v) const {
    return v.valid() && node(v).requires_grad;
}

template <typename T>
bool Tape<T>::has_grad(Var v) const {
    const Node& n = node(v);
    return n.grad.dims() == n.value.dims() && n.grad.size() == n.value.size() && !n.grad.empty();
}

template <typename T>
const BasicTensor4<T>& Tape<T>::grad(Var v) const {
    if (!has_grad(v)) throw StateError("no gradient recorded for tape node " + std::to_string(v.id));
    return node(v).grad;
}

template <typename T>
BasicTensor4<T>& Tape<T>::grad_buffer(Var v) {
    Node& n = node(v);
    if (n.grad.dims() != n.value.dims() || n.grad.size() != n.value.size()) n.grad = Tensor(n.value.dims());
    return n.grad;
}

template <typename T>
void Tape<T>::backward(Var root, T seed) {
    Node& r = node(root);
    if (r.value.size() != 1) {
        throw ShapeError("backward root must be a scalar, got " + to_string(r.value.dims()));
    }
    if (replayed_) throw StateError("tape already replayed");
    replayed_ = true;
    if (!r.requires_grad) return;
    grad_buffer(root)[0] += seed;
    for (std::size_t i = static_cast<std::size_t>(root.id) + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.backward) n.backward(*this);
    }
}

namespace {

std::array<int, 4> extents(const Shape4& s) { return {s.n, s.c, s.h, s.w}; }

}  // namespace

template <typename T>
BasicTensor4<T> slice_prefix(const BasicTensor4<T>& t, int axis, int count) {
    if (axis < 0 || axis > 3) throw ArgumentError("slice axis must be in [0,3], got " + std::to_string(axis));
    auto ext = extents(t.dims());
    if (count < 1 || count > ext[axis]) {
        throw ArgumentError("slice count " + std::to_string(count) + " outside [1," + std::to_string(ext[axis]) +
                            "] on axis " + std::to_string(axis));
    }
    if (count == ext[axis]) return t;
    auto out_ext = ext;
    out_ext[axis] = count;
    BasicTensor4<T> out(Shape4{out_ext[0], out_ext[1], out_ext[2], out_ext[3]});
    // Copy contiguous runs: everything to the right of `axis` is contiguous.
    std::size_t inner = 1;
    for (int a = axis + 1; a < 4; ++a) inner *= static_cast<std::size_t>(ext[a]);
    std::size_t outer = 1;
    for (int a = 0; a < axis; ++a) outer *= static_cast<std::size_t>(ext[a]);
    const std::size_t run = inner * static_cast<std::size_t>(count);
    const std::size_t src_stride = inner * static_cast<std::size_t>(ext[axis]);
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(t.data() + o * src_stride, run, out.data() + o * run);
    }
    return out;
}

template <typename T>
void accumulate_prefix(BasicTensor4<T>& dst, const BasicTensor4<T>& src, int axis,
                       std::vector<std::uint8_t>* touched) {
    auto ext = extents(dst.dims());
    auto sext = extents(src.dims());
    for (int a = 0; a < 4; ++a) {
        if (a != axis && ext[a] != sext[a]) {
            throw ShapeError("accumulate_prefix: " + to_string(src.dims()) + " is not a prefix of " +
                             to_string(dst.dims()));
        }
    }
    if (sext[axis] > ext[axis]) throw ShapeError("accumulate_prefix: prefix longer than destination");
    std::size_t inner = 1;
    for (int a = axis + 1; a < 4; ++a) inner *= static_cast<std::size_t>(ext[a]);
    std::size_t outer = 1;
    for (int a = 0; a < axis; ++a) outer *= static_cast<std::size_t>(ext[a]);
    const std::size_t run = inner * static_cast<std::size_t>(sext[axis]);
    const std::size_t dst_stride = inner * static_cast<std::size_t>(ext[axis]);
    for (std::size_t o = 0; o < outer; ++o) {
        T* d = dst.data() + o * dst_stride;
        const T* s = src.data() + o * run;
        for (std::size_t i = 0; i < run; ++i) d[i] += s[i];
        if (touched != nullptr) std::fill_n(touched->begin() + static_cast<std::ptrdiff_t>(o * dst_stride), run, 1);
    }
}

template struct Parameter<float>;
template struct Parameter<double>;
template class Tape<float>;
template class Tape<double>;
template BasicTensor4<float> slice_prefix(const BasicTensor4<float>&, int, int);
template BasicTensor4<double> slice_prefix(const BasicTensor4<double>&, int, int);
template void accumulate_prefix(BasicTensor4<float>&, const BasicTensor4<float>&, int, std::vector<std::uint8_t>*);
template void accumulate_prefix(BasicTensor4<double>&, const BasicTensor4<double>&, int,
                                std::vector<std::uint8_t>*);

}  // namespace ssa
