// Acceptance gate: one PASS/FAIL line per criterion, exit 0 only when all
// criteria hold. Criterion 9 drives the installed CLI binary (argv[1]).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gridformer/profile.hpp"
#include "gridformer/train.hpp"

using namespace gridformer;

namespace {

namespace fs = std::filesystem;

Tape<double>* const kNoTape = nullptr;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename T>
bool bits_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.size(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

template <typename T>
void zero_param(Parameter<T>* p) {
    if (p) p->value = Tensor<T>::zeros(p->value.shape());
}

template <typename T>
Tensor<T> rand_unit(const Shape& s, uint64_t seed) {
    std::mt19937_64 rng(seed);
    return Tensor<T>::uniform(s, rng, T(0.05), T(0.95));
}

template <typename T>
std::vector<Tensor<T>> pyramid_of(const Tensor<T>& x, int64_t rows) {
    std::vector<Tensor<T>> pyr{x};
    for (int64_t i = 1; i < rows; ++i) pyr.push_back(avg_pool2d(pyr.back(), 2));
    return pyr;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return std::string(buf);
}

struct Outcome {
    bool ok = false;
    std::string detail;
};

// 1. Analytic gradients of the combined loss vs central differences, f64,
// micro config at 16x16, under five minutes.
Outcome criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    const GradcheckReport rep = gradcheck_model(preset_config("micro"), 7, 16, 4, 1e-4, 1e-8);
    const double secs = seconds_since(t0);
    Outcome o;
    o.ok = rep.pass && secs < 300.0;
    o.detail = fmt("%lld elements across %lld tensors, worst rel err %.3e, %.1fs",
                   (long long)rep.elements_checked, (long long)rep.tensors_checked,
                   rep.worst_rel, secs);
    return o;
}

// 2. Zeroed-sublayer residual identities, bit-exact over 5 seeds.
Outcome criterion2() {
    Outcome o;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        {
            CetlConfig cfg;
            cfg.channels = 8;
            cfg.sample_stride = 2;
            ParamStore<double> store;
            std::mt19937_64 rng(seed);
            CetlWeights<double> w = make_cetl(store, "cetl", cfg, rng);
            zero_param(w.le_conv.w);
            zero_param(w.le_conv.b);
            zero_param(w.ffn2.w);
            zero_param(w.ffn2.b);
            const auto z = rand_unit<double>(Shape{1, 8, 8, 8}, seed * 11 + 1);
            if (!bits_equal(cetl_forward(z, w, kNoTape), z)) {
                o.detail = fmt("cetl identity broke at seed %llu", (unsigned long long)seed);
                return o;
            }
        }
        {
            RdtbConfig cfg;
            cfg.channels = 8;
            cfg.growth = 4;
            cfg.num_rdtl = 2;
            cfg.cetls_per_rdtl = 1;
            cfg.cetl.sample_stride = 2;
            ParamStore<double> store;
            std::mt19937_64 rng(seed + 100);
            RdtbWeights<double> w = make_rdtb(store, "rdtb", cfg, rng);
            zero_param(w.fuse.w);
            const auto x = rand_unit<double>(Shape{1, 8, 8, 8}, seed * 13 + 2);
            if (!bits_equal(rdtb_forward(x, w, kNoTape), x)) {
                o.detail = fmt("rdtb identity broke at seed %llu", (unsigned long long)seed);
                return o;
            }
        }
        {
            GridFormerModel<double> m(preset_config("micro"), seed + 200);
            for (auto& c : m.tail_convs()) {
                zero_param(c.w);
                zero_param(c.b);
            }
            const auto pyr =
                pyramid_of(rand_unit<double>(Shape{1, 3, 16, 16}, seed * 17 + 3), 3);
            const auto out = m.forward(pyr, nullptr);
            for (size_t i = 0; i < pyr.size(); ++i)
                if (!bits_equal(out[i], pyr[i])) {
                    o.detail = fmt("model identity broke at seed %llu level %zu",
                                   (unsigned long long)seed, i);
                    return o;
                }
        }
    }
    o.ok = true;
    o.detail = "cetl, rdtb, and zero-tail model identities bit-exact over 5 seeds";
    return o;
}

// 3. Shape closure across extents, including the pad-and-crop path, at
// C = 8 and C = 48.
Outcome criterion3() {
    Outcome o;
    GridFormerModel<float> small(preset_config("micro"), 1);
    for (const int64_t e : {48L, 64L, 80L}) {
        const auto pyr = pyramid_of(Tensor<float>::full(Shape{1, 3, e, e}, 0.5f), 3);
        const auto out = small.forward(pyr, nullptr);
        for (size_t i = 0; i < pyr.size(); ++i)
            if (out[i].shape() != pyr[i].shape()) {
                o.detail = fmt("C=8 forward shape drift at extent %lld", (long long)e);
                return o;
            }
    }
    const auto odd = small.restore_pyramid(Tensor<float>::full(Shape{1, 3, 100, 100}, 0.5f),
                                           nullptr);
    if (odd[0].shape() != Shape{1, 3, 100, 100} || odd[1].shape() != Shape{1, 3, 50, 50} ||
        odd[2].shape() != Shape{1, 3, 25, 25}) {
        o.detail = "C=8 restore did not crop 100x100 back to the input extents";
        return o;
    }

    GridFormerModel<float> big(preset_config("gridformer"), 1);
    const auto pyr = pyramid_of(Tensor<float>::full(Shape{1, 3, 64, 64}, 0.5f), 3);
    const auto out = big.forward(pyr, nullptr);
    for (size_t i = 0; i < pyr.size(); ++i)
        if (out[i].shape() != pyr[i].shape()) {
            o.detail = "C=48 forward shape drift at 64x64";
            return o;
        }
    o.ok = true;
    o.detail = "extents 48/64/80 closed, 100 padded and cropped, C=48 closed at 64";
    return o;
}

// 4. MAC accounting equals closed forms exactly; attention cost scales 4x
// where token attention scales 16x.
Outcome criterion4() {
    Outcome o;
    if (conv2d_macs(48, 48, 3, 256, 256) != 1358954496LL) {
        o.detail = "conv2d closed form mismatch";
        return o;
    }
    if (conv2d_macs(8, 4, 1, 10, 10) != 3200 ||
        matmul_macs(3, 4, 5) != 60 || bmm_macs(7, 3, 4, 5) != 420) {
        o.detail = "matmul/bmm closed form mismatch";
        return o;
    }
    const int64_t ca = compact_attention_macs(48, 100, true, 1);
    if (ca != 2 * 2 * 24 * 24 * 100) {
        o.detail = "compact attention closed form mismatch";
        return o;
    }
    const double ca_ratio =
        double(compact_attention_macs(48, 400, true, 1)) / double(ca);
    const double tok_ratio =
        double(token_attention_macs(48, 400)) / double(token_attention_macs(48, 100));
    if (ca_ratio != 4.0 || tok_ratio != 16.0) {
        o.detail = fmt("scaling ratios %.3f / %.3f, wanted 4 / 16", ca_ratio, tok_ratio);
        return o;
    }
    o.ok = true;
    o.detail = "conv/matmul/attention counts exact, scaling 4.0 vs 16.0";
    return o;
}

// 5. Ablation table directions on parameter and attention-MAC counts.
Outcome criterion5() {
    Outcome o;
    const auto rows = ablate_table(preset_config("micro"), 32);
    auto row = [&](const std::string& name) -> const AblateRow* {
        for (const auto& r : rows)
            if (r.name == name) return &r;
        return nullptr;
    };
    const AblateRow* full = row("full");
    const AblateRow* no_cs = row("no-channel-split");
    const AblateRow* no_le = row("no-local-enhancement");
    const AblateRow* no_fs = row("no-feature-sampling");
    const AblateRow* no_dc = row("no-dense-connections");
    if (!full || !no_cs || !no_le || !no_fs || !no_dc) {
        o.detail = "ablation table is missing variants";
        return o;
    }
    if (!(no_cs->params > full->params)) {
        o.detail = "channel split failed to reduce parameters";
        return o;
    }
    if (!(full->params > no_le->params)) {
        o.detail = "local enhancement failed to add parameters";
        return o;
    }
    if (!(full->params > no_dc->params)) {
        o.detail = "dense connections failed to add parameters";
        return o;
    }
    if (!(no_fs->attention_macs > full->attention_macs) ||
        no_fs->attention_params != full->attention_params) {
        o.detail = "feature sampling failed to cut attention MACs at equal parameters";
        return o;
    }
    std::ostringstream csv;
    write_ablate_csv(csv, rows);
    if (csv.str().find("config,params,macs") != 0) {
        o.detail = "ablation CSV header mismatch";
        return o;
    }
    o.ok = true;
    o.detail = fmt("params full=%lld no-cs=%lld no-le=%lld no-dc=%lld, attn MACs %lld -> %lld",
                   (long long)full->params, (long long)no_cs->params, (long long)no_le->params,
                   (long long)no_dc->params, (long long)full->attention_macs,
                   (long long)no_fs->attention_macs);
    return o;
}

// 6. Loss and metric anchors.
Outcome criterion6() {
    Outcome o;
    const auto x = rand_unit<double>(Shape{1, 3, 16, 16}, 5);
    const auto pyr = pyramid_of(x, 3);
    const double lc = charbonnier_ms(pyr, pyr, 1e-3).item();
    if (std::abs(lc - 1e-3) > 1e-9) {
        o.detail = fmt("charbonnier at perfect reconstruction %.12e", lc);
        return o;
    }
    const double lt =
        total_loss(Tensor<double>::scalar(0.4), Tensor<double>::scalar(0.3), 0.1).item();
    if (std::abs(lt - 0.43) > 1e-15) {
        o.detail = fmt("total loss composition %.17g", lt);
        return o;
    }
    const auto a = Tensor<double>::full(Shape{1, 3, 16, 16}, 0.5);
    const auto b = Tensor<double>::full(Shape{1, 3, 16, 16}, 0.6);
    const double db = psnr(a, b);
    if (std::abs(db - 20.0) > 1e-6) {
        o.detail = fmt("psnr of 0.1 offset %.9f dB", db);
        return o;
    }
    if (ssim(x, x) != 1.0) {
        o.detail = "ssim self-similarity is not exactly 1";
        return o;
    }
    o.ok = true;
    o.detail = "charbonnier 1e-3, composition exact, psnr 20 dB, ssim(a,a) = 1";
    return o;
}

// 7. Overfit probe: one hazy pair to 35 dB within 2000 steps.
Outcome criterion7() {
    const auto t0 = std::chrono::steady_clock::now();
    PairSample pair;
    pair.id = "overfit";
    pair.clean = synth_clean_image(64, 64, 31);
    DegradationSpec spec;
    spec.kind = "haze";
    spec.seed = 31;
    spec.beta = 1.6;
    pair.degraded = degrade(pair.clean, spec);

    GridFormerModel<float> model(preset_config("tiny"), 31);
    TrainConfig cfg;
    cfg.total_steps = 250;
    cfg.patch = 64;
    cfg.batch_size = 1;
    cfg.use_flips = false;
    cfg.alpha = 0.0;
    cfg.lr_start = 1e-3;
    cfg.lr_end = 2e-4;
    cfg.seed = 31;
    cfg.log_every = 250;

    auto self_psnr = [&] {
        TensorF r = model.restore(pair.degraded, nullptr);
        float* p = r.mut();
        for (int64_t i = 0; i < r.size(); ++i) p[i] = std::min(1.0f, std::max(0.0f, p[i]));
        return psnr(r, pair.clean);
    };
    double best = self_psnr();
    int64_t steps_used = 0;
    while (steps_used < 2000 && best < 35.0) {
        (void)train_loop(model, {pair}, cfg, "");
        steps_used += cfg.total_steps;
        best = std::max(best, self_psnr());
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.ok = best >= 35.0 && secs < 1800.0;
    o.detail = fmt("%.2f dB after %lld steps, %.0fs", best, (long long)steps_used, secs);
    return o;
}

// 8. Generalization probe: 64 train pairs, 5000 steps, +3 dB over the
// degraded baseline on 16 held-out pairs.
Outcome criterion8() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string dir = (fs::temp_directory_path() / "gf_accept_ds").string();
    fs::remove_all(dir);
    SynthDatasetConfig dcfg;
    dcfg.kind = "haze";
    dcfg.train_count = 64;
    dcfg.test_count = 16;
    dcfg.extent = 64;
    dcfg.seed = 23;
    write_dataset(dir, dcfg);
    const auto train = load_dataset_dir(dir + "/train");
    const auto test = load_dataset_dir(dir + "/test");

    const double base = mean_psnr_rgb(evaluate_baseline(test));

    GridFormerModel<float> model(preset_config("tiny"), 23);
    TrainConfig cfg;
    cfg.total_steps = 5000;
    cfg.patch = 32;
    cfg.batch_size = 1;
    cfg.alpha = 0.1;
    cfg.lr_start = 5e-4;
    cfg.seed = 23;
    cfg.log_every = 1000;
    (void)train_loop(model, train, cfg, "");

    const double trained = mean_psnr_rgb(evaluate(model, test));
    fs::remove_all(dir);
    const double secs = seconds_since(t0);
    Outcome o;
    o.ok = trained >= base + 3.0;
    o.detail = fmt("baseline %.2f dB, trained %.2f dB (+%.2f), %.0fs", base, trained,
                   trained - base, secs);
    return o;
}

// 9. Determinism: identical seeds give bit-identical traces and checkpoints
// through the CLI; checkpoint round trips preserve forward bits.
Outcome criterion9(const std::string& cli) {
    Outcome o;
    if (cli.empty()) {
        o.detail = "CLI binary path missing (pass it as argv[1])";
        return o;
    }
    const std::string root = (fs::temp_directory_path() / "gf_accept_cli").string();
    fs::remove_all(root);
    fs::create_directories(root);
    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > " + root + "/log.txt 2>&1";
        return std::system(cmd.c_str());
    };
    if (run("synth --out " + root + "/data --kind haze --train-count 4 --test-count 2 "
            "--extent 32 --seed 11") != 0) {
        o.detail = "synth invocation failed";
        return o;
    }
    const std::string common = "train --config micro --data " + root + "/data --steps 100 "
                               "--patch 16 --seed 3 --alpha 0 --use-flips 0 --out " + root;
    if (run(common + "/run1") != 0 || run(common + "/run2") != 0) {
        o.detail = "train invocation failed";
        return o;
    }
    auto slurp = [](const std::string& p) {
        std::ifstream is(p, std::ios::binary);
        std::stringstream ss;
        ss << is.rdbuf();
        return ss.str();
    };
    const std::string tr1 = slurp(root + "/run1/trace.csv");
    const std::string tr2 = slurp(root + "/run2/trace.csv");
    if (tr1.empty() || tr1 != tr2) {
        o.detail = "traces differ between identically seeded runs";
        return o;
    }
    const std::string ck1 = slurp(root + "/run1/model.gfck");
    if (ck1.empty() || ck1 != slurp(root + "/run2/model.gfck")) {
        o.detail = "checkpoints differ between identically seeded runs";
        return o;
    }

    GridFormerModel<float> m1(checkpoint_config(root + "/run1/model.gfck"), 0);
    load_checkpoint(root + "/run1/model.gfck", m1);
    const auto pyr = pyramid_of(rand_unit<float>(Shape{1, 3, 32, 32}, 9), 3);
    const auto y1 = m1.forward(pyr, nullptr);
    save_checkpoint(root + "/copy.gfck", m1);
    GridFormerModel<float> m2(preset_config("micro"), 999);
    load_checkpoint(root + "/copy.gfck", m2);
    const auto y2 = m2.forward(pyr, nullptr);
    for (size_t i = 0; i < y1.size(); ++i)
        if (!bits_equal(y1[i], y2[i])) {
            o.detail = "forward outputs changed across a save/load round trip";
            return o;
        }
    fs::remove_all(root);
    o.ok = true;
    o.detail = "100-step traces and checkpoints bit-identical, round trip exact";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";
    const int only = argc > 2 ? std::atoi(argv[2]) : 0;
    int failures = 0;
    auto report = [&](int n, const Outcome& o) {
        std::printf("%s criterion %d: %s\n", o.ok ? "PASS" : "FAIL", n, o.detail.c_str());
        std::fflush(stdout);
        if (!o.ok) ++failures;
    };
    auto guarded = [&](int n, auto fn) {
        if (only != 0 && n != only) return;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = std::string("exception: ") + e.what();
        }
        report(n, o);
    };

    guarded(1, criterion1);
    guarded(2, criterion2);
    guarded(3, criterion3);
    guarded(4, criterion4);
    guarded(5, criterion5);
    guarded(6, criterion6);
    guarded(7, criterion7);
    guarded(8, criterion8);
    guarded(9, [&] { return criterion9(cli); });

    if (only != 0) return failures == 0 ? 0 : 1;
    if (failures == 0) {
        std::printf("acceptance: all 9 criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria failed\n", failures);
    return 1;
}
