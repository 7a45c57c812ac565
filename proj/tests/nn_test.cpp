#include <doctest.h>

#include "gridformer/nn.hpp"
#include "test_util.hpp"

using namespace gridformer;
using gftest::gradcheck_input;
using gftest::rand_tensor;
using gftest::weighted_sum;
using gftest::TapeD;
using TensorD = gridformer::TensorD;

TEST_CASE("conv spec validation") {
    CHECK_THROWS_AS(validate_conv_spec(ConvSpec{0, 4}), ConfigError);
    CHECK_THROWS_AS(validate_conv_spec(ConvSpec{4, 0}), ConfigError);
    CHECK_THROWS_AS(validate_conv_spec(ConvSpec{4, 4, 0}), ConfigError);
    CHECK_THROWS_AS(validate_conv_spec(ConvSpec{4, 4, 3, 0}), ConfigError);
    CHECK_THROWS_AS(validate_conv_spec(ConvSpec{4, 4, 3, 1, -1}), ConfigError);
    CHECK_NOTHROW(validate_conv_spec(ConvSpec{4, 8, 3, 1, 1}));
}

TEST_CASE("param store paths, order, duplicates") {
    ParamStore<double> store;
    store.create("b.w", TensorD::zeros(Shape{2, 2}));
    store.create("a.w", TensorD::zeros(Shape{3}));
    CHECK_THROWS_AS(store.create("b.w", TensorD::zeros(Shape{1})), ContractError);
    CHECK(store.size() == 2);
    CHECK(store.scalar_count() == 7);
    auto list = store.list();
    CHECK(list[0]->path == "b.w");  // creation order, not lexical
    CHECK(list[1]->path == "a.w");
    CHECK(store.find("a.w") != nullptr);
    CHECK(store.find("missing") == nullptr);
}

TEST_CASE("conv2d layer init bounds and determinism") {
    ParamStore<double> s1, s2;
    std::mt19937_64 r1(9), r2(9);
    auto l1 = make_conv2d(s1, "c", ConvSpec{4, 8, 3, 1, 1}, r1);
    auto l2 = make_conv2d(s2, "c", ConvSpec{4, 8, 3, 1, 1}, r2);
    const double bound = 1.0 / std::sqrt(4.0 * 9.0);
    for (int64_t i = 0; i < l1.w->value.size(); ++i) {
        CHECK(std::abs(l1.w->value[i]) <= bound);
        CHECK(l1.w->value[i] == l2.w->value[i]);
    }
    for (int64_t i = 0; i < l1.b->value.size(); ++i) CHECK(l1.b->value[i] == 0.0);
    CHECK(s1.find("c.w")->value.shape() == Shape{8, 4, 3, 3});
    CHECK(s1.find("c.b")->value.shape() == Shape{8});

    ParamStore<double> s3;
    std::mt19937_64 r3(9);
    auto nb = make_conv2d(s3, "c", ConvSpec{4, 8, 1, 1, 0, false}, r3);
    CHECK(nb.b == nullptr);
    CHECK(s3.find("c.b") == nullptr);
}

TEST_CASE("conv2d 1x1 identity kernel") {
    ParamStore<double> store;
    std::mt19937_64 rng(1);
    auto layer = make_conv2d(store, "c", ConvSpec{2, 2, 1, 1, 0}, rng);
    TensorD w = TensorD::from(Shape{2, 2, 1, 1}, {1, 0, 0, 1});
    layer.w->value = w;
    TensorD x = rand_tensor(Shape{1, 2, 3, 3}, 5);
    TensorD y = layer(x, nullptr);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d 2x2 all-ones closed form") {
    TensorD x = TensorD::from(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
    TensorD w = TensorD::full(Shape{1, 1, 2, 2}, 1.0);
    TensorD y = conv2d(x, w, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == 10.0);
}

TEST_CASE("conv bias broadcasts per channel") {
    TensorD x = TensorD::zeros(Shape{1, 1, 2, 2});
    TensorD w = TensorD::zeros(Shape{3, 1, 1, 1});
    TensorD b = TensorD::from(Shape{3}, {1, 2, 3});
    TensorD y = conv2d(x, w, &b, 1, 0);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < 4; ++i) CHECK(y[c * 4 + i] == double(c + 1));
}

TEST_CASE("conv_transpose2d k=s=2 ones scatter") {
    TensorD x = TensorD::from(Shape{1, 1, 1, 1}, {3});
    TensorD w = TensorD::full(Shape{1, 1, 2, 2}, 1.0);
    TensorD y = conv_transpose2d(x, w, 2, 0);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    for (int64_t i = 0; i < 4; ++i) CHECK(y[i] == 3.0);
}

TEST_CASE("conv_transpose2d is the conv adjoint") {
    // <conv(x), y> == <x, convT(y)> with the same kernel, stride, padding.
    // Odd extent keeps the transpose output extent equal to the input extent at stride 2.
    TensorD x = rand_tensor(Shape{1, 3, 7, 7}, 21);
    TensorD w = rand_tensor(Shape{4, 3, 3, 3}, 22);
    for (int64_t stride : {1, 2}) {
        TensorD cx = conv2d(x, w, stride, 1);
        TensorD y = rand_tensor(cx.shape(), 23);
        TensorD cty = conv_transpose2d(y, w, stride, 1);
        double lhs = 0, rhs = 0;
        for (int64_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
        for (int64_t i = 0; i < x.size(); ++i) rhs += x[i] * cty[i];
        CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("conv transpose layer init uses stride-matched fan-in") {
    ParamStore<double> store;
    std::mt19937_64 rng(4);
    auto layer = make_conv_transpose2d(store, "d", ConvSpec{8, 8, 2, 2, 0}, rng);
    CHECK(layer.w->value.shape() == Shape{8, 8, 2, 2});
    const double bound = 1.0 / std::sqrt(8.0);  // kernel == stride: each output sees in_ch taps
    for (int64_t i = 0; i < layer.w->value.size(); ++i)
        CHECK(std::abs(layer.w->value[i]) <= bound);
}

TEST_CASE("avg_pool2d closed form") {
    TensorD x = TensorD::from(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(avg_pool2d(x, 2).item() == 2.5);
    TensorD x2 = rand_tensor(Shape{2, 3, 4, 4}, 3);
    TensorD p1 = avg_pool2d(x2, 1);
    for (int64_t i = 0; i < x2.size(); ++i) CHECK(p1[i] == x2[i]);
}

TEST_CASE("pixel_unshuffle channel order round trips") {
    TensorD x = TensorD::from(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
    TensorD u = pixel_unshuffle(x, 2);
    CHECK(u.shape() == Shape{1, 4, 1, 1});
    CHECK(u[0] == 1.0);
    CHECK(u[1] == 2.0);
    CHECK(u[2] == 3.0);
    CHECK(u[3] == 4.0);
    TensorD back = pixel_shuffle(u, 2);
    for (int64_t i = 0; i < 4; ++i) CHECK(back[i] == x[i]);
}

TEST_CASE("layer norm constants, moments, gradient") {
    ParamStore<double> store;
    auto ln = make_layer_norm(store, "n", 3);
    CHECK(store.find("n.gain")->value.shape() == Shape{3});
    CHECK(store.find("n.offset")->value.shape() == Shape{3});

    TensorD c = TensorD::full(Shape{1, 3, 2, 2}, 5.0);
    TensorD y = ln(c, nullptr);
    for (int64_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i]) < 1e-8);

    // per-position channel stats: mean 0, var ~1
    TensorD x = rand_tensor(Shape{1, 3, 2, 2}, 31);
    TensorD n = ln(x, nullptr);
    for (int64_t p = 0; p < 4; ++p) {
        double m = 0, v = 0;
        for (int64_t ch = 0; ch < 3; ++ch) m += n[ch * 4 + p];
        m /= 3;
        for (int64_t ch = 0; ch < 3; ++ch) v += (n[ch * 4 + p] - m) * (n[ch * 4 + p] - m);
        v /= 3;
        CHECK(std::abs(m) < 1e-12);
        CHECK(std::abs(v - 1.0) < 1e-3);
    }

    CHECK(gradcheck_input([&](const TensorD& t) { return weighted_sum(ln(t, t.tape()), 33); }, x) <
          1e-6);
}

TEST_CASE("conv layer gradients reach weight and bias") {
    ParamStore<double> store;
    std::mt19937_64 rng(7);
    auto layer = make_conv2d(store, "c", ConvSpec{2, 3, 3, 1, 1}, rng);
    TensorD x = rand_tensor(Shape{1, 2, 4, 4}, 8);
    TapeD tape;
    tape.backward(weighted_sum(layer(x, &tape), 9));
    CHECK(layer.w->has_grad());
    CHECK(layer.b->has_grad());

    const TensorD base_w = layer.w->value.clone();
    auto loss_at = [&](double dv, int64_t j) {
        layer.w->value.mut()[j] = base_w[j] + dv;
        const double l = weighted_sum(layer(x, nullptr), 9).item();
        layer.w->value.mut()[j] = base_w[j];
        return l;
    };
    const double fd = (loss_at(1e-6, 5) - loss_at(-1e-6, 5)) / 2e-6;
    CHECK(gftest::rel_err(fd, layer.w->grad[5]) < 1e-6);
}
