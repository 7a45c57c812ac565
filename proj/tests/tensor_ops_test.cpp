#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "gridformer/serialize.hpp"
#include "test_util.hpp"

using namespace gridformer;
using gftest::gradcheck_input;
using gftest::max_rel_err;
using gftest::rand_tensor;
using gftest::rand_tensor_off_kink;
using gftest::weighted_sum;
using gftest::TapeD;

TEST_CASE("shape validation") {
    CHECK_THROWS_AS(Shape(std::initializer_list<int64_t>{}), ShapeError);
    CHECK_THROWS_AS((Shape{1, 2, 3, 4, 5}), ShapeError);
    CHECK_THROWS_AS((Shape{2, 0}), ShapeError);
    CHECK_THROWS_AS((Shape{-1}), ShapeError);
    CHECK(Shape{2, 3, 4}.numel() == 24);
    CHECK(Shape{2, 3}.str() == "[2,3]");
    CHECK(Shape{2, 3} == Shape{2, 3});
    CHECK(Shape{2, 3} != Shape{3, 2});
}

TEST_CASE("tensor construction contracts") {
    CHECK_THROWS_AS(TensorD::from(Shape{3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(TensorD::zeros(Shape{2}).item(), ContractError);
    CHECK(TensorD::scalar(7.0).item() == 7.0);
    TensorD t = TensorD::full(Shape{2, 2}, 3.0);
    CHECK(t[3] == 3.0);
}

TEST_CASE("matmul closed forms") {
    TensorD i2 = TensorD::from(Shape{2, 2}, {1, 0, 0, 1});
    TensorD b = TensorD::from(Shape{2, 2}, {5, 6, 7, 8});
    TensorD c = matmul(i2, b);
    for (int64_t i = 0; i < 4; ++i) CHECK(c[i] == b[i]);

    CHECK(matmul(TensorD::from(Shape{1, 1}, {2}), TensorD::from(Shape{1, 1}, {3})).item() == 6.0);

    CHECK_THROWS_AS(matmul(TensorD::zeros(Shape{2, 3}), TensorD::zeros(Shape{2, 3})), ShapeError);
}

TEST_CASE("matmul gradient of sum against identity") {
    TapeD tape;
    TensorD a = tape.leaf(TensorD::from(Shape{2, 2}, {1, 2, 3, 4}));
    TensorD b = TensorD::from(Shape{2, 2}, {1, 0, 0, 1});
    tape.backward(sum_all(matmul(a, b)));
    TensorD g = tape.grad_of(a);
    for (int64_t i = 0; i < 4; ++i) CHECK(g[i] == 1.0);
}

TEST_CASE("matmul and bmm gradients match finite differences") {
    TensorD a = rand_tensor(Shape{3, 4}, 11);
    CHECK(gradcheck_input([&](const TensorD& x) { return weighted_sum(matmul(x, rand_tensor(Shape{4, 2}, 12)), 13); }, a) < 1e-6);
    TensorD w = rand_tensor(Shape{4, 2}, 12);
    CHECK(gradcheck_input([&](const TensorD& x) { return weighted_sum(matmul(rand_tensor(Shape{3, 4}, 11), x), 13); }, w) < 1e-6);

    TensorD ba = rand_tensor(Shape{2, 3, 4}, 21);
    TensorD bb = rand_tensor(Shape{2, 4, 2}, 22);
    CHECK(gradcheck_input([&](const TensorD& x) { return weighted_sum(bmm(x, bb), 23); }, ba) < 1e-6);
    CHECK(gradcheck_input([&](const TensorD& x) { return weighted_sum(bmm(ba, x), 23); }, bb) < 1e-6);
}

TEST_CASE("softmax closed forms and invariances") {
    TensorD z = softmax_rows(TensorD::from(Shape{1, 2}, {0, 0}));
    CHECK(z[0] == doctest::Approx(0.5));
    CHECK(z[1] == doctest::Approx(0.5));

    TensorD l = softmax_rows(TensorD::from(Shape{1, 2}, {std::log(1.0), std::log(3.0)}));
    CHECK(l[0] == doctest::Approx(0.25));
    CHECK(l[1] == doctest::Approx(0.75));

    TensorD x = rand_tensor(Shape{5, 7}, 31, -3, 3);
    TensorD s = softmax_rows(x);
    for (int64_t r = 0; r < 5; ++r) {
        double sum = 0;
        for (int64_t j = 0; j < 7; ++j) sum += s[r * 7 + j];
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }

    TensorD shifted = softmax_rows(add_scalar(x, 4.25));
    CHECK(max_rel_err(s, shifted) < 1e-12);

    CHECK(gradcheck_input([&](const TensorD& v) { return weighted_sum(softmax_rows(v), 32); }, x) < 1e-6);
}

TEST_CASE("concat and split are exact inverses") {
    TensorD a = rand_tensor(Shape{1, 2, 1, 1}, 41);
    TensorD b = rand_tensor(Shape{1, 3, 1, 1}, 42);
    TensorD cat = concat_channels<double>({a, b});
    CHECK(cat.shape() == Shape{1, 5, 1, 1});
    auto parts = split_channels(cat, {2, 3});
    for (int64_t i = 0; i < a.size(); ++i) CHECK(parts[0][i] == a[i]);
    for (int64_t i = 0; i < b.size(); ++i) CHECK(parts[1][i] == b[i]);

    TensorD single = concat_channels<double>({a});
    for (int64_t i = 0; i < a.size(); ++i) CHECK(single[i] == a[i]);

    TapeD tape;
    TensorD at = tape.leaf(a), bt = tape.leaf(b);
    tape.backward(sum_all(concat_channels<double>({at, bt})));
    TensorD ga = tape.grad_of(at), gb = tape.grad_of(bt);
    for (int64_t i = 0; i < ga.size(); ++i) CHECK(ga[i] == 1.0);
    for (int64_t i = 0; i < gb.size(); ++i) CHECK(gb[i] == 1.0);

    TensorD big = rand_tensor(Shape{2, 6, 3, 3}, 43);
    auto back = concat_channels(split_channels(big, {1, 2, 3}));
    for (int64_t i = 0; i < big.size(); ++i) CHECK(back[i] == big[i]);

    CHECK_THROWS_AS(concat_channels<double>({a, rand_tensor(Shape{1, 2, 2, 1}, 44)}), ShapeError);
    CHECK_THROWS_AS(split_channels(cat, {2, 2}), ShapeError);
}

TEST_CASE("elementwise closed forms") {
    TensorD r = relu(TensorD::from(Shape{3}, {-1, 0, 2}));
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 0.0);
    CHECK(r[2] == 2.0);

    CHECK(mean_all(TensorD::full(Shape{4, 4}, 2.5)).item() == 2.5);

    TapeD tape;
    TensorD x = tape.leaf(TensorD::from(Shape{2}, {3, -3}));
    tape.backward(sum_all(relu(x)));
    TensorD g = tape.grad_of(x);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 0.0);

    CHECK_THROWS_AS(add(TensorD::zeros(Shape{2}), TensorD::zeros(Shape{3})), ShapeError);
}

TEST_CASE("relu gradient is zero at exactly zero") {
    TapeD tape;
    TensorD x = tape.leaf(TensorD::from(Shape{1}, {0.0}));
    tape.backward(sum_all(relu(x)));
    CHECK(tape.grad_of(x)[0] == 0.0);
}

TEST_CASE("elementwise gradients match finite differences") {
    TensorD x = rand_tensor_off_kink(Shape{2, 3, 4, 4}, 51);
    TensorD y = rand_tensor(Shape{2, 3, 4, 4}, 52);
    CHECK(gradcheck_input([&](const TensorD& v) { return weighted_sum(add(v, y), 53); }, x) < 1e-6);
    CHECK(gradcheck_input([&](const TensorD& v) { return weighted_sum(sub(v, y), 53); }, x) < 1e-6);
    CHECK(gradcheck_input([&](const TensorD& v) { return weighted_sum(mul(v, y), 53); }, x) < 1e-6);
    CHECK(gradcheck_input([&](const TensorD& v) { return weighted_sum(relu(v), 53); }, x) < 1e-6);
    CHECK(gradcheck_input([&](const TensorD& v) { return weighted_sum(abs_ew(v), 53); }, x) < 1e-6);
    CHECK(gradcheck_input([&](const TensorD& v) { return weighted_sum(scale(v, -1.7), 53); }, x) < 1e-6);
    CHECK(gradcheck_input([&](const TensorD& v) { return weighted_sum(add_scalar(v, 0.3), 53); }, x) < 1e-6);
    CHECK(gradcheck_input([&](const TensorD& v) { return mean_all(v); }, x) < 1e-6);

    TensorD pos = rand_tensor(Shape{3, 3}, 54, 0.5, 2.0);
    CHECK(gradcheck_input([&](const TensorD& v) { return weighted_sum(sqrt_ew(v), 55); }, pos) < 1e-6);

    CHECK(gradcheck_input([&](const TensorD& v) { return weighted_sum(transpose_last2(v), 56); }, rand_tensor(Shape{2, 3, 4}, 57)) < 1e-6);
    CHECK(gradcheck_input([&](const TensorD& v) { return weighted_sum(reshape(v, Shape{4, 6}), 58); }, rand_tensor(Shape{2, 3, 4}, 59)) < 1e-6);
}

TEST_CASE("backward contracts") {
    SUBCASE("root equals the parameter") {
        TapeD tape;
        Parameter<double> p{"p", TensorD::scalar(5.0), {}};
        TensorD pt = tape.watch(p);
        tape.backward(pt);
        CHECK(p.grad[0] == 1.0);
    }
    SUBCASE("sum of squares") {
        TapeD tape;
        Parameter<double> p{"p", TensorD::from(Shape{2}, {2, 3}), {}};
        TensorD pt = tape.watch(p);
        tape.backward(sum_all(mul(pt, pt)));
        CHECK(p.grad[0] == 4.0);
        CHECK(p.grad[1] == 6.0);
    }
    SUBCASE("non-scalar root is rejected") {
        TapeD tape;
        TensorD x = tape.leaf(TensorD::zeros(Shape{2}));
        CHECK_THROWS_AS(tape.backward(add(x, x)), ContractError);
    }
    SUBCASE("unreachable parameter receives zero grad") {
        TapeD tape;
        Parameter<double> used{"u", TensorD::scalar(1.0), {}};
        Parameter<double> unused{"x", TensorD::from(Shape{3}, {1, 2, 3}), {}};
        TensorD ut = tape.watch(used);
        tape.watch(unused);
        tape.backward(sum_all(mul(ut, ut)));
        REQUIRE(unused.has_grad());
        for (int64_t i = 0; i < 3; ++i) CHECK(unused.grad[i] == 0.0);
    }
    SUBCASE("fan-out accumulates by summation") {
        TapeD tape;
        Parameter<double> p{"p", TensorD::scalar(3.0), {}};
        TensorD pt = tape.watch(p);
        tape.backward(sum_all(add(pt, pt)));
        CHECK(p.grad[0] == 2.0);
    }
    SUBCASE("repeated backward accumulates into the parameter") {
        Parameter<double> p{"p", TensorD::scalar(3.0), {}};
        for (int pass = 0; pass < 2; ++pass) {
            TapeD tape;
            TensorD pt = tape.watch(p);
            tape.backward(sum_all(pt));
        }
        CHECK(p.grad[0] == 2.0);
        p.zero_grad();
        CHECK(p.grad[0] == 0.0);
    }
    SUBCASE("watch is memoized per tape") {
        TapeD tape;
        Parameter<double> p{"p", TensorD::scalar(3.0), {}};
        TensorD a = tape.watch(p);
        TensorD b = tape.watch(p);
        CHECK(a.node() == b.node());
    }
    SUBCASE("operands from different tapes are rejected") {
        TapeD t1, t2;
        TensorD a = t1.leaf(TensorD::scalar(1.0));
        TensorD b = t2.leaf(TensorD::scalar(2.0));
        CHECK_THROWS_AS(add(a, b), ContractError);
    }
}

TEST_CASE("finite_diff closed forms") {
    TensorD g = finite_diff<double>(
        [](const TensorD& v) { return sum_all(mul(v, v)).item(); }, TensorD::from(Shape{1}, {1.0}),
        1e-5);
    CHECK(std::abs(g[0] - 2.0) < 1e-8);

    TensorD gr = finite_diff<double>(
        [](const TensorD& v) { return sum_all(relu(v)).item(); }, TensorD::from(Shape{1}, {5.0}),
        1e-5);
    CHECK(std::abs(gr[0] - 1.0) < 1e-10);
}

TEST_CASE("tape replay reproduces recorded values bit-exactly") {
    TensorD x0 = rand_tensor(Shape{1, 4, 6, 6}, 61);
    TensorD w = rand_tensor(Shape{4, 4, 3, 3}, 62, -0.3, 0.3);

    TapeD tape;
    TensorD x = tape.leaf(x0);
    TensorD y = conv2d(x, tape.leaf(w), 1, 1);
    TensorD z = softmax_rows(reshape(avg_pool2d(relu(y), 2), Shape{4, 9}));
    TensorD loss = mean_all(z);

    std::vector<double> before(z.vec());
    double loss_before = loss.item();
    tape.replay();
    for (size_t i = 0; i < before.size(); ++i) CHECK(z[static_cast<int64_t>(i)] == before[i]);
    CHECK(loss.item() == loss_before);
}

TEST_CASE("two identical forward and backward passes are bit-identical") {
    auto run = [](std::vector<double>* grad_out) {
        TensorD x0 = rand_tensor(Shape{1, 2, 4, 4}, 71);
        TapeD tape;
        Parameter<double> w{"w", rand_tensor(Shape{2, 2, 3, 3}, 72, -0.4, 0.4), {}};
        TensorD y = conv2d(tape.leaf(x0), tape.watch(w), 1, 1);
        tape.backward(mean_all(mul(y, y)));
        *grad_out = w.grad.vec();
        return 0;
    };
    std::vector<double> g1, g2;
    run(&g1);
    run(&g2);
    REQUIRE(g1.size() == g2.size());
    for (size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("gft1 round trip and malformed files") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "gf_serialize_test").string();
    fs::create_directories(dir);

    TensorD t = rand_tensor(Shape{2, 3, 4, 5}, 81);
    save_tensor(dir + "/t.gft", t);
    TensorD back = load_tensor<double>(dir + "/t.gft");
    CHECK(back.shape() == t.shape());
    for (int64_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
    CHECK(tensor_file_dtype(dir + "/t.gft") == Dtype::f64);

    Tensor<float> tf = Tensor<float>::full(Shape{3}, 1.5f);
    save_tensor(dir + "/tf.gft", tf);
    CHECK(tensor_file_dtype(dir + "/tf.gft") == Dtype::f32);
    CHECK_THROWS_AS(load_tensor<double>(dir + "/tf.gft"), FormatError);

    {
        std::FILE* f = std::fopen((dir + "/bad.gft").c_str(), "wb");
        std::fputs("NOPE", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_tensor<double>(dir + "/bad.gft"), FormatError);
    CHECK_THROWS_AS(load_tensor<double>(dir + "/missing.gft"), IoError);

    {
        std::FILE* f = std::fopen((dir + "/trunc.gft").c_str(), "wb");
        std::fputs("GFT1", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_tensor<double>(dir + "/trunc.gft"), FormatError);

    fs::remove_all(dir);
}
