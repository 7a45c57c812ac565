#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "gridformer/grid.hpp"
#include "gridformer/ops.hpp"
#include "test_util.hpp"

using namespace gridformer;
using gftest::TensorD;

namespace {

Tape<double>* const kNoTape = nullptr;

GridConfig micro() { return preset_config("micro"); }

std::vector<TensorD> rand_pyramid(const GridConfig& cfg, int64_t n, int64_t extent,
                                  uint64_t seed) {
    std::vector<TensorD> pyr{gftest::rand_tensor(Shape{n, 3, extent, extent}, seed, 0.05, 0.95)};
    for (int64_t i = 1; i < cfg.rows; ++i) pyr.push_back(avg_pool2d(pyr.back(), 2));
    return pyr;
}

void zero_conv(Conv2dLayer<double>& c) {
    c.w->value = TensorD::zeros(c.w->value.shape());
    if (c.b) c.b->value = TensorD::zeros(c.b->value.shape());
}

bool bitwise_equal(const TensorD& a, const TensorD& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.size(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("preset configs round trip through kv text") {
    for (const std::string name : {"gridformer", "gridformer-s", "tiny", "micro"}) {
        CHECK(is_preset_name(name));
        const GridConfig cfg = preset_config(name);
        const GridConfig back = grid_config_from_kv(grid_config_kv(cfg));
        CHECK(back.rows == cfg.rows);
        CHECK(back.fusion_columns == cfg.fusion_columns);
        CHECK(back.base_channels == cfg.base_channels);
        CHECK(back.growth == cfg.growth);
        CHECK(back.sampler_strides == cfg.sampler_strides);
        CHECK(back.cetls_per_rdtl == cfg.cetls_per_rdtl);
        CHECK(back.heads_per_half == cfg.heads_per_half);
        CHECK(back.ffn_expansion == cfg.ffn_expansion);
        CHECK(back.use_norm == cfg.use_norm);
        CHECK(back.use_feature_sampling == cfg.use_feature_sampling);
        CHECK(back.use_channel_split == cfg.use_channel_split);
        CHECK(back.use_local_enhancement == cfg.use_local_enhancement);
        CHECK(back.dense_connections == cfg.dense_connections);
        CHECK(back.local_fusion == cfg.local_fusion);
        CHECK(back.local_skip == cfg.local_skip);
    }
    CHECK_FALSE(is_preset_name("gridformer-xl"));
    CHECK_THROWS_AS((void)preset_config("gridformer-xl"), ConfigError);
}

TEST_CASE("default sampler strides follow the row count") {
    const GridConfig four = grid_config_from_kv(parse_kv_text("grid.rows=4\n"));
    CHECK(four.sampler_strides == std::vector<int64_t>{4, 2, 2, 2});
    const GridConfig given =
        grid_config_from_kv(parse_kv_text("grid.rows=3\ngrid.sampler_strides=4,6,2\n"));
    CHECK(given.sampler_strides == std::vector<int64_t>{4, 6, 2});
}

TEST_CASE("column directions run down, plain, up") {
    using F = FlowDir;
    auto dirs = [](int64_t cf) {
        std::vector<F> v;
        for (int64_t j = 0; j < cf; ++j) v.push_back(column_direction(j, cf));
        return v;
    };
    CHECK(dirs(5) == std::vector<F>{F::Down, F::Down, F::Plain, F::Up, F::Up});
    CHECK(dirs(4) == std::vector<F>{F::Down, F::Down, F::Up, F::Up});
    CHECK(dirs(2) == std::vector<F>{F::Down, F::Up});
    CHECK(dirs(1) == std::vector<F>{F::Plain});
}

TEST_CASE("pad multiple covers the pyramid depth and every sampler") {
    GridFormerModel<float> m(micro(), 1);
    CHECK(m.pad_multiple() == 16);

    GridConfig wide = micro();
    wide.sampler_strides = {4, 6, 2};
    GridFormerModel<float> mw(wide, 1);
    CHECK(mw.pad_multiple() == 48);
}

TEST_CASE("forward preserves pyramid shapes across extents") {
    GridFormerModel<float> m(micro(), 3);
    for (const int64_t e : {32L, 48L}) {
        std::vector<Tensor<float>> pyr{
            Tensor<float>::full(Shape{1, 3, e, e}, 0.25f)};
        for (int64_t i = 1; i < m.config().rows; ++i) pyr.push_back(avg_pool2d(pyr.back(), 2));
        const auto out = m.forward(pyr, nullptr);
        REQUIRE(out.size() == pyr.size());
        for (size_t i = 0; i < out.size(); ++i) CHECK(out[i].shape() == pyr[i].shape());
    }
}

TEST_CASE("forward rejects malformed pyramids") {
    GridFormerModel<float> m(micro(), 3);
    std::vector<Tensor<float>> two{Tensor<float>::zeros(Shape{1, 3, 16, 16}),
                                   Tensor<float>::zeros(Shape{1, 3, 8, 8})};
    CHECK_THROWS_AS((void)m.forward(two, nullptr), ContractError);

    std::vector<Tensor<float>> offgrid{Tensor<float>::zeros(Shape{1, 3, 20, 20}),
                                       Tensor<float>::zeros(Shape{1, 3, 10, 10}),
                                       Tensor<float>::zeros(Shape{1, 3, 5, 5})};
    CHECK_THROWS_AS((void)m.forward(offgrid, nullptr), ContractError);

    std::vector<Tensor<float>> skewed{Tensor<float>::zeros(Shape{1, 3, 16, 16}),
                                      Tensor<float>::zeros(Shape{1, 3, 8, 8}),
                                      Tensor<float>::zeros(Shape{1, 3, 2, 2})};
    CHECK_THROWS_AS((void)m.forward(skewed, nullptr), ContractError);
}

TEST_CASE("zeroed tail convs make the model the identity") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        GridFormerModel<double> m(micro(), seed);
        for (auto& c : m.tail_convs()) zero_conv(c);
        const auto pyr = rand_pyramid(m.config(), 1, 16, seed * 31 + 7);
        const auto out = m.forward(pyr, nullptr);
        for (size_t i = 0; i < pyr.size(); ++i) CHECK(bitwise_equal(out[i], pyr[i]));
    }
}

TEST_CASE("zeroed fusion weights decouple the top row from lower levels") {
    GridFormerModel<double> m(micro(), 11);
    for (auto& col : m.fusion_cells()) {
        auto& top = col[0];
        if (top.has_site) top.w2->value = TensorD::zeros(top.w2->value.shape());
    }
    auto pyr = rand_pyramid(m.config(), 1, 16, 100);
    const auto base = m.forward(pyr, nullptr);
    pyr[1] = gftest::rand_tensor(pyr[1].shape(), 200, 0.05, 0.95);
    pyr[2] = gftest::rand_tensor(pyr[2].shape(), 300, 0.05, 0.95);
    const auto moved = m.forward(pyr, nullptr);
    CHECK(bitwise_equal(moved[0], base[0]));
    CHECK_FALSE(bitwise_equal(moved[1], base[1]));
}

TEST_CASE("weighted fusion closed forms and gradients") {
    const Shape s{2, 4, 3, 3};
    const TensorD a = gftest::rand_tensor(s, 5, 0.1, 1.0);
    const TensorD b = gftest::rand_tensor(s, 6, 0.1, 1.0);

    const TensorD keep = weighted_fusion(a, b, TensorD::full(Shape{4}, 1.0),
                                         TensorD::zeros(Shape{4}));
    CHECK(bitwise_equal(keep, a));

    const TensorD mix = weighted_fusion(a, b, TensorD::full(Shape{4}, 0.5),
                                        TensorD::full(Shape{4}, 0.5));
    for (int64_t i = 0; i < mix.size(); ++i)
        CHECK(mix.data()[i] == doctest::Approx(0.5 * (a.data()[i] + b.data()[i])).epsilon(1e-12));

    CHECK_THROWS_AS(
        (void)weighted_fusion(a, TensorD::zeros(Shape{2, 4, 3, 2}), TensorD::full(Shape{4}, 1.0),
                              TensorD::full(Shape{4}, 1.0)),
        ShapeError);

    Tape<double> tape;
    const TensorD ta = tape.leaf(a);
    const TensorD tb = tape.leaf(b);
    const TensorD w1 = tape.leaf(gftest::rand_tensor(Shape{4}, 7));
    const TensorD w2 = tape.leaf(gftest::rand_tensor(Shape{4}, 8));
    tape.backward(sum_all(weighted_fusion(ta, tb, w1, w2)));
    const TensorD ga = tape.grad_of(ta);
    const TensorD g1 = tape.grad_of(w1);
    for (int64_t c = 0; c < 4; ++c) {
        double want = 0;
        for (int64_t n = 0; n < 2; ++n)
            for (int64_t p = 0; p < 9; ++p) want += a.data()[(n * 4 + c) * 9 + p];
        CHECK(g1.data()[c] == doctest::Approx(want).epsilon(1e-12));
        CHECK(ga.data()[c * 9] == doctest::Approx(w1.data()[c]).epsilon(1e-12));
    }
}

TEST_CASE("transitions trade extent for channels") {
    ParamStore<double> store;
    std::mt19937_64 rng(4);

    TransitionWeights<double> down;
    down.conv = make_conv2d(store, "down.conv", ConvSpec{16, 8, 3, 1, 1, true}, rng);
    const TensorD x = gftest::rand_tensor(Shape{1, 4, 8, 8}, 9);
    const TensorD d = downsample_transition(x, down, kNoTape);
    CHECK(d.shape() == Shape{1, 8, 4, 4});

    TransitionWeights<double> up;
    up.conv = make_conv2d(store, "up.conv", ConvSpec{8, 16, 3, 1, 1, true}, rng);
    const TensorD y = gftest::rand_tensor(Shape{1, 8, 4, 4}, 10);
    const TensorD u = upsample_transition(y, up, kNoTape);
    CHECK(u.shape() == Shape{1, 4, 8, 8});

    zero_conv(down.conv);
    const TensorD dz = downsample_transition(x, down, kNoTape);
    for (int64_t i = 0; i < dz.size(); ++i) CHECK(dz.data()[i] == 0.0);
}

TEST_CASE("restore handles extents the grid cannot represent directly") {
    GridFormerModel<float> m(micro(), 2);

    const Tensor<float> odd = Tensor<float>::full(Shape{1, 3, 100, 100}, 0.5f);
    const auto pyr = m.restore_pyramid(odd, nullptr);
    REQUIRE(pyr.size() == 3);
    CHECK(pyr[0].shape() == Shape{1, 3, 100, 100});
    CHECK(pyr[1].shape() == Shape{1, 3, 50, 50});
    CHECK(pyr[2].shape() == Shape{1, 3, 25, 25});
    CHECK(m.restore(odd, nullptr).shape() == Shape{1, 3, 100, 100});

    CHECK(m.restore(Tensor<float>::full(Shape{2, 3, 16, 32}, 0.25f), nullptr).shape() ==
          Shape{2, 3, 16, 32});
}

TEST_CASE("zeroed tail restore returns the input region exactly") {
    GridFormerModel<double> m(micro(), 6);
    for (auto& c : m.tail_convs()) zero_conv(c);
    const TensorD img = gftest::rand_tensor(Shape{1, 3, 20, 28}, 44, 0.05, 0.95);
    CHECK(bitwise_equal(m.restore(img, nullptr), img));
}

TEST_CASE("checkpoints round trip the full parameter set") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "gf_grid_test.gfck").string();

    GridFormerModel<double> m1(micro(), 21);
    const auto pyr = rand_pyramid(m1.config(), 1, 16, 77);
    const auto y1 = m1.forward(pyr, nullptr);
    save_checkpoint(path, m1);

    GridFormerModel<double> m2(micro(), 22);
    const auto before = m2.forward(pyr, nullptr);
    CHECK_FALSE(bitwise_equal(before[0], y1[0]));
    load_checkpoint(path, m2);
    const auto y2 = m2.forward(pyr, nullptr);
    for (size_t i = 0; i < y1.size(); ++i) CHECK(bitwise_equal(y1[i], y2[i]));

    const GridConfig stored = checkpoint_config(path);
    CHECK(stored.base_channels == micro().base_channels);
    CHECK(stored.fusion_columns == micro().fusion_columns);

    fs::remove(path);
}

TEST_CASE("checkpoint loading reports the first incompatible parameter") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "gf_grid_mismatch.gfck").string();
    GridFormerModel<double> m(micro(), 3);
    save_checkpoint(path, m);

    GridConfig narrow = micro();
    narrow.base_channels = 4;
    GridFormerModel<double> other(narrow, 3);
    CHECK_THROWS_WITH_AS(load_checkpoint(path, other),
                         doctest::Contains("head.e0"), FormatError);

    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    is.close();
    const std::string cut = (fs::temp_directory_path() / "gf_grid_cut.gfck").string();
    std::ofstream os(cut, std::ios::binary);
    os.write(bytes.data(), std::streamsize(bytes.size() / 2));
    os.close();
    GridFormerModel<double> fresh(micro(), 3);
    CHECK_THROWS_AS(load_checkpoint(cut, fresh), FormatError);

    fs::remove(path);
    fs::remove(cut);
}

TEST_CASE("model gradient matches finite differences end to end") {
    GridFormerModel<double> m(micro(), 13);
    const TensorD x0 = gftest::rand_tensor(Shape{1, 3, 16, 16}, 50, 0.1, 0.9);
    auto f = [&](const TensorD& x) {
        std::vector<TensorD> pyr{x};
        for (int64_t i = 1; i < m.config().rows; ++i) pyr.push_back(avg_pool2d(pyr.back(), 2));
        const auto out = m.forward(pyr, x.tape());
        TensorD acc = gftest::weighted_sum(out[0], 61);
        acc = add(acc, gftest::weighted_sum(out[1], 62));
        return add(acc, gftest::weighted_sum(out[2], 63));
    };
    CHECK(gftest::gradcheck_input(f, x0) < 5e-5);
}
