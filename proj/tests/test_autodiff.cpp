#include <doctest.h>

#include <cmath>

#include "ssa/errors.hpp"
#include "ssa/graph_ops.hpp"
#include "test_support.hpp"

using namespace ssa;
using namespace ssa::test;

namespace {

template <typename TapeT>
using ValueOf = typename TapeT::Tensor::value_type;

// Wraps a tensor-valued op into mean(op(...) * G) so every output element gets a distinct weight.
template <typename Op>
auto weighted(const Tensor4d& g, Op op) {
    return [g, op](auto& tape, const std::vector<Var>& v) {
        using T = ValueOf<std::decay_t<decltype(tape)>>;
        const Var y = op(tape, v);
        return ops::mean(tape, ops::mul(tape, y, tape.constant(g.template cast<T>())));
    };
}

template <typename F>
void check_both(F f, const std::vector<Tensor4d>& inputs) {
    const ScalarFn<double> fd = f;
    const ScalarFn<float> ff = f;
    CHECK(grad_check_double(fd, inputs) <= 1e-6);
    CHECK(grad_check_float(ff, fd, inputs) <= 1e-4);
}

// Values bounded away from zero, for kinked ops.
Tensor4d away_from_zero(Rng& rng, Shape4 d) {
    auto t = random_tensor<double>(rng, d, 0.1, 1.0);
    for (auto& v : t.values()) {
        if (uniform01(rng) < 0.5) v = -v;
    }
    return t;
}

template <typename Op>
void check_op(Rng& rng, Shape4 out, Op op, const std::vector<Tensor4d>& inputs) {
    check_both(weighted(random_tensor<double>(rng, out), op), inputs);
}

}  // namespace

TEST_CASE("tape: constants carry no gradient") {
    Tape<float> tape;
    const Var c = tape.constant(Tensor4(1, 1, 1, 1, 2.0f));
    const Var x = tape.variable(Tensor4(1, 1, 1, 1, 3.0f));
    const Var y = ops::mul(tape, c, x);
    tape.backward(y);
    CHECK_FALSE(tape.has_grad(c));
    CHECK_THROWS_AS(tape.grad(c), StateError);
    CHECK(tape.grad(x)[0] == 2.0f);
}

TEST_CASE("tape: fan-out accumulates") {
    Tape<double> tape;
    const Var x = tape.variable(Tensor4d(1, 1, 1, 1, 1.5));
    const Var y = ops::add(tape, ops::mul(tape, x, x), x);
    tape.backward(y);
    CHECK(tape.grad(x)[0] == 4.0);
}

TEST_CASE("tape: single replay, scalar root and handle checks") {
    Tape<float> tape;
    const Var x = tape.variable(Tensor4(1, 1, 1, 2, 1.0f));
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
    const Var m = ops::mean(tape, x);
    tape.backward(m);
    CHECK(tape.grad(x)[1] == 0.5f);
    CHECK_THROWS_AS(tape.backward(m), StateError);
    CHECK_THROWS_AS(tape.value(Var{}), StateError);
    CHECK_THROWS_AS(tape.value(Var{999}), StateError);
}

TEST_CASE("tape: backward seed scales every gradient") {
    Tape<double> tape;
    const Var x = tape.variable(Tensor4d(Shape4{1, 1, 1, 2}, {1.0, 2.0}));
    tape.backward(ops::mean(tape, ops::mul(tape, x, x)), 0.25);
    CHECK(tape.grad(x)[0] == doctest::Approx(0.25));
    CHECK(tape.grad(x)[1] == doctest::Approx(0.5));
}

TEST_CASE("tape: inference mode computes the same values without recording gradients") {
    Rng rng(1);
    const auto a = random_tensor(rng, Shape4{1, 2, 3, 3});
    Tape<float> train;
    Tape<float> infer(false);
    const Var ya = ops::relu(train, ops::scale(train, train.variable(a), 2.0f));
    const Var yb = ops::relu(infer, ops::scale(infer, infer.variable(a), 2.0f));
    CHECK(bitwise_equal(train.value(ya), infer.value(yb)));
    CHECK_FALSE(infer.requires_grad(yb));
    CHECK(train.requires_grad(ya));
}

TEST_CASE("parameters: accumulation, touched mask and zero_grad") {
    Parameter<float> p("w", Tensor4(Shape4{1, 1, 1, 2}, {2.0f, -1.0f}));
    CHECK_FALSE(p.any_touched());
    for (int pass = 0; pass < 2; ++pass) {
        Tape<float> tape;
        const Var w = tape.parameter(p);
        tape.backward(ops::mean(tape, ops::mul(tape, w, w)));
    }
    // d mean(w^2) = w, accumulated over two passes
    CHECK(p.grad[0] == 4.0f);
    CHECK(p.grad[1] == -2.0f);
    CHECK(p.any_touched());
    p.zero_grad();
    CHECK_FALSE(p.any_touched());
    CHECK(p.grad[0] == 0.0f);
}

TEST_CASE("parameters: prefix leaves touch only their prefix") {
    Rng rng(2);
    for (int axis = 0; axis < 4; ++axis) {
        Parameter<double> p("w", random_tensor<double>(rng, Shape4{3, 4, 2, 5}));
        int ext[4] = {3, 4, 2, 5};
        const int count = ext[axis] - 1;
        Tape<double> tape;
        const Var w = tape.parameter_prefix(p, axis, count);
        const auto& v = tape.value(w);
        CHECK(bitwise_equal(v, slice_prefix(p.value, axis, count)));
        tape.backward(ops::mean(tape, w));
        for (int n = 0; n < 3; ++n)
            for (int c = 0; c < 4; ++c)
                for (int h = 0; h < 2; ++h)
                    for (int x = 0; x < 5; ++x) {
                        const int idx[4] = {n, c, h, x};
                        const std::size_t flat = p.value.index(n, c, h, x);
                        const bool inside = idx[axis] < count;
                        CHECK(static_cast<bool>(p.touched[flat]) == inside);
                        CHECK((p.grad[flat] != 0.0) == inside);
                    }
    }
}

TEST_CASE("slice_prefix and accumulate_prefix reject bad arguments") {
    Tensor4 t(2, 3, 4, 5);
    CHECK_THROWS_AS(slice_prefix(t, 4, 1), ArgumentError);
    CHECK_THROWS_AS(slice_prefix(t, 1, 0), ArgumentError);
    CHECK_THROWS_AS(slice_prefix(t, 1, 4), ArgumentError);
    CHECK(slice_prefix(t, 1, 3).dims() == t.dims());
    Tensor4 src(2, 2, 4, 6);
    CHECK_THROWS_AS(accumulate_prefix(t, src, 1, nullptr), ShapeError);
    Tensor4 longer(2, 4, 4, 5);
    CHECK_THROWS_AS(accumulate_prefix(t, longer, 1, nullptr), ShapeError);
}

TEST_CASE("ops: elementwise shape mismatch is a ShapeError") {
    Tape<float> tape;
    const Var a = tape.constant(Tensor4(1, 2, 3, 3));
    const Var b = tape.constant(Tensor4(1, 2, 3, 4));
    CHECK_THROWS_AS(ops::add(tape, a, b), ShapeError);
    CHECK_THROWS_AS(ops::mul(tape, a, b), ShapeError);
    CHECK_THROWS_AS(ops::reshape(tape, a, Shape4{1, 1, 1, 17}), ShapeError);
    CHECK_THROWS_AS(ops::concat_channels(tape, a, b), ShapeError);
}

TEST_CASE("gradient: conv2d with and without bias") {
    Rng rng(10);
    for (int stride : {1, 2}) {
        for (int pad : {0, 1}) {
            const auto x = random_tensor<double>(rng, Shape4{2, 2, 5, 5});
            const auto w = random_tensor<double>(rng, Shape4{3, 2, 3, 3});
            const auto b = random_tensor<double>(rng, Shape4{1, 3, 1, 1});
            const int o = (5 + 2 * pad - 3) / stride + 1;
            check_op(rng, Shape4{2, 3, o, o},
                     [=](auto& t, const std::vector<Var>& v) { return ops::conv2d(t, v[0], v[1], v[2], stride, pad); },
                     {x, w, b});
            check_op(rng, Shape4{2, 3, o, o},
                     [=](auto& t, const std::vector<Var>& v) { return ops::conv2d(t, v[0], v[1], Var{}, stride, pad); },
                     {x, w});
        }
    }
}

TEST_CASE("gradient: linear") {
    Rng rng(11);
    check_op(rng, Shape4{4, 2, 1, 1},
             [](auto& t, const std::vector<Var>& v) { return ops::linear(t, v[0], v[1], v[2]); },
             {random_tensor<double>(rng, Shape4{4, 3, 1, 1}), random_tensor<double>(rng, Shape4{2, 3, 1, 1}),
              random_tensor<double>(rng, Shape4{1, 2, 1, 1})});
}

TEST_CASE("gradient: relu and abs away from the kink") {
    Rng rng(12);
    const Shape4 s{1, 2, 3, 4};
    check_op(rng, s, [](auto& t, const std::vector<Var>& v) { return ops::relu(t, v[0]); }, {away_from_zero(rng, s)});
    check_op(rng, s, [](auto& t, const std::vector<Var>& v) { return ops::abs(t, v[0]); }, {away_from_zero(rng, s)});
}

TEST_CASE("relu and abs subgradients at zero") {
    Tape<float> tape;
    const Var x = tape.variable(Tensor4(1, 1, 1, 1, 0.0f));
    tape.backward(ops::add(tape, ops::relu(tape, x), ops::abs(tape, x)));
    CHECK(tape.grad(x)[0] == 0.0f);
}

TEST_CASE("gradient: binary arithmetic") {
    Rng rng(13);
    const Shape4 s{2, 3, 2, 2};
    const auto a = random_tensor<double>(rng, s);
    const auto b = random_tensor<double>(rng, s);
    const auto pos = random_tensor<double>(rng, s, 0.5, 1.5);
    check_op(rng, s, [](auto& t, const std::vector<Var>& v) { return ops::add(t, v[0], v[1]); }, {a, b});
    check_op(rng, s, [](auto& t, const std::vector<Var>& v) { return ops::sub(t, v[0], v[1]); }, {a, b});
    check_op(rng, s, [](auto& t, const std::vector<Var>& v) { return ops::mul(t, v[0], v[1]); }, {a, b});
    check_op(rng, s, [](auto& t, const std::vector<Var>& v) { return ops::div(t, v[0], v[1]); }, {a, pos});
}

TEST_CASE("gradient: scalar ops, reshape, mean and concat") {
    Rng rng(14);
    const Shape4 s{1, 2, 3, 2};
    const auto a = random_tensor<double>(rng, s);
    check_op(rng, s, [](auto& t, const std::vector<Var>& v) { return ops::scale(t, v[0], decltype(t.value(v[0])[0])(-1.75)); }, {a});
    check_op(rng, s, [](auto& t, const std::vector<Var>& v) { return ops::add_scalar(t, v[0], decltype(t.value(v[0])[0])(0.5)); }, {a});
    check_op(rng, Shape4{3, 4, 1, 1}, [](auto& t, const std::vector<Var>& v) { return ops::reshape(t, v[0], Shape4{3, 4, 1, 1}); }, {a});
    check_both([](auto& t, const std::vector<Var>& v) { return ops::mean(t, ops::mul(t, v[0], v[0])); }, {a});
    const auto b = random_tensor<double>(rng, Shape4{1, 3, 3, 2});
    check_op(rng, Shape4{1, 5, 3, 2}, [](auto& t, const std::vector<Var>& v) { return ops::concat_channels(t, v[0], v[1]); }, {a, b});
}

TEST_CASE("gradient: bicubic resize up and down") {
    Rng rng(15);
    const auto x = random_tensor<double>(rng, Shape4{1, 2, 4, 5});
    check_op(rng, Shape4{1, 2, 9, 7}, [](auto& t, const std::vector<Var>& v) { return ops::bicubic_resize(t, v[0], 9, 7); }, {x});
    check_op(rng, Shape4{1, 2, 3, 2}, [](auto& t, const std::vector<Var>& v) { return ops::bicubic_resize(t, v[0], 3, 2); }, {x});
}

TEST_CASE("gradient: softmax rows and group weighted sum") {
    Rng rng(16);
    const auto logits = random_tensor<double>(rng, Shape4{3, 4, 1, 1}, -2, 2);
    check_op(rng, Shape4{3, 4, 1, 1}, [](auto& t, const std::vector<Var>& v) { return ops::softmax_rows(t, v[0]); }, {logits});
    const auto cand = random_tensor<double>(rng, Shape4{12, 5, 1, 1});
    const auto wts = random_tensor<double>(rng, Shape4{3, 4, 1, 1});
    check_op(rng, Shape4{3, 5, 1, 1}, [](auto& t, const std::vector<Var>& v) { return ops::group_weighted_sum(t, v[0], v[1]); }, {cand, wts});
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(17);
    Tape<float> tape(false);
    const Var s = ops::softmax_rows(tape, tape.constant(random_tensor(rng, Shape4{6, 4, 1, 1}, -20, 20)));
    const auto& v = tape.value(s);
    for (int r = 0; r < 6; ++r) {
        float sum = 0;
        for (int k = 0; k < 4; ++k) sum += v.at(r, k, 0, 0);
        CHECK(std::abs(sum - 1.0f) <= 1e-6f);
    }
}

TEST_CASE("rows_to_map is pixel-major") {
    Tape<float> tape(false);
    Tensor4 rows(6, 2, 1, 1);
    for (int p = 0; p < 6; ++p) {
        rows.at(p, 0, 0, 0) = static_cast<float>(p);
        rows.at(p, 1, 0, 0) = static_cast<float>(10 * p);
    }
    const auto& m = tape.value(ops::rows_to_map(tape, tape.constant(rows), 2, 3));
    REQUIRE(m.dims() == Shape4{1, 2, 2, 3});
    CHECK(m.at(0, 0, 1, 2) == 5.0f);
    CHECK(m.at(0, 1, 1, 0) == 30.0f);
    CHECK_THROWS_AS(ops::rows_to_map(tape, tape.constant(rows), 2, 2), ShapeError);
}

TEST_CASE("gradient: rows_to_map and window filter") {
    Rng rng(18);
    check_op(rng, Shape4{1, 3, 2, 4}, [](auto& t, const std::vector<Var>& v) { return ops::rows_to_map(t, v[0], 2, 4); },
             {random_tensor<double>(rng, Shape4{8, 3, 1, 1})});
    const std::vector<double> win = gaussian_window(3, 0.8);
    check_op(rng, Shape4{1, 2, 3, 4}, [win](auto& t, const std::vector<Var>& v) { return ops::window_filter_valid(t, v[0], win); },
             {random_tensor<double>(rng, Shape4{1, 2, 5, 6})});
}

TEST_CASE("window filter of a constant is the constant") {
    Tape<double> tape(false);
    const auto win = gaussian_window(11, 1.5);
    const auto& y = tape.value(ops::window_filter_valid(tape, tape.constant(Tensor4d(1, 1, 12, 13, 0.7)), win));
    REQUIRE(y.dims() == Shape4{1, 1, 2, 3});
    for (double v : y.values()) CHECK(v == doctest::Approx(0.7).epsilon(1e-14));
    CHECK_THROWS_AS(ops::window_filter_valid(tape, tape.constant(Tensor4d(1, 1, 10, 13)), win), ArgumentError);
}
