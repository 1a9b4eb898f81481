#pragma once

// Tape-based reverse-mode differentiation.
//
// A Tape owns every intermediate value of one forward pass. Ops append a node
// holding the output value and a closure that pushes the node's gradient to
// its inputs. backward() replays the closures in reverse recording order.
// Trainable tensors live outside the tape as Parameter records; their leaves
// accumulate into Parameter::grad and mark which elements were reached.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssa/tensor.hpp"

namespace ssa {

/// Handle to a node on a Tape.
struct Var {
    std::int32_t id = -1;
    bool valid() const noexcept { return id >= 0; }
};

template <typename T>
struct Parameter {
    std::string name;
    BasicTensor4<T> value;
    BasicTensor4<T> grad;
    std::vector<std::uint8_t> touched;  // 1 where a gradient arrived since zero_grad()

    Parameter() = default;
    Parameter(std::string name_, BasicTensor4<T> value_);

    void zero_grad();
    bool any_touched() const noexcept;
    std::size_t size() const noexcept { return value.size(); }
};

template <typename T>
class Tape {
public:
    using Tensor = BasicTensor4<T>;
    using BackwardFn = std::function<void(Tape&)>;

    /// With grad disabled, ops skip recording closures (inference mode).
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const noexcept { return grad_enabled_; }

    /// Leaf that never receives a gradient.
    Var constant(Tensor value);
    /// Leaf whose gradient is kept on the tape (readable via grad()).
    Var variable(Tensor value);
    /// Leaf bound to a parameter; backward accumulates into p.grad.
    Var parameter(Parameter<T>& p);
    /// Leaf holding the prefix p.value[..count] along `axis`; backward only
    /// touches that prefix of p.grad.
    Var parameter_prefix(Parameter<T>& p, int axis, int count);

    /// Appends an op result. `fn` is stored only if some input requires grad.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;
    /// Gradient of a node after backward(); throws StateError if none arrived.
    const Tensor& grad(Var v) const;
    bool has_grad(Var v) const;
    /// Gradient buffer of a node, allocated as zeros on first use. For op closures.
    Tensor& grad_buffer(Var v);

    /// Seeds d(root) = seed (root must be a single element) and replays the tape.
    void backward(Var root, T seed = T(1));

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    const Node& node(Var v) const;
    Node& node(Var v);
    Var push(Tensor value, bool requires_grad, BackwardFn fn);

    std::vector<Node> nodes_;
    bool grad_enabled_;
    bool replayed_ = false;
};

/// Extracts the prefix [0, count) of `t` along `axis` (0..3).
template <typename T>
BasicTensor4<T> slice_prefix(const BasicTensor4<T>& t, int axis, int count);

/// dst[prefix along axis] += src; marks the covered elements in `touched`.
template <typename T>
void accumulate_prefix(BasicTensor4<T>& dst, const BasicTensor4<T>& src, int axis,
                       std::vector<std::uint8_t>* touched);

}  // namespace ssa
