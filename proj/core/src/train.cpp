#include "gridformer/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "gridformer/errors.hpp"
#include "gridformer/ops.hpp"

namespace gridformer {

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.lr_start <= 0 || cfg.lr_end < 0 || cfg.lr_end > cfg.lr_start)
        throw ConfigError("train: need 0 < lr_end <= lr_start");
    if (cfg.beta1 < 0 || cfg.beta1 >= 1 || cfg.beta2 < 0 || cfg.beta2 >= 1)
        throw ConfigError("train: betas must lie in [0,1)");
    if (cfg.adam_eps <= 0) throw ConfigError("train: adam_eps must be positive");
    if (cfg.weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
    if (cfg.grad_clip < 0) throw ConfigError("train: grad_clip must be >= 0");
    if (cfg.total_steps < 1) throw ConfigError("train: total_steps must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (cfg.patch < 1) throw ConfigError("train: patch must be >= 1");
    if (cfg.alpha < 0) throw ConfigError("train: alpha must be >= 0");
    if (cfg.char_eps <= 0) throw ConfigError("train: char_eps must be positive");
    if (cfg.log_every < 1) throw ConfigError("train: log_every must be >= 1");
    if (cfg.checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
}

KvList train_config_kv(const TrainConfig& cfg) {
    KvList kv;
    auto set_d = [&kv](const char* k, double v) {
        char buf[64];
        snprintf(buf, sizeof buf, "%.17g", v);
        kv.set(k, buf);
    };
    set_d("train.lr_start", cfg.lr_start);
    set_d("train.lr_end", cfg.lr_end);
    set_d("train.beta1", cfg.beta1);
    set_d("train.beta2", cfg.beta2);
    set_d("train.adam_eps", cfg.adam_eps);
    set_d("train.weight_decay", cfg.weight_decay);
    set_d("train.grad_clip", cfg.grad_clip);
    kv.set_int("train.total_steps", cfg.total_steps);
    kv.set_int("train.batch_size", cfg.batch_size);
    kv.set_int("train.patch", cfg.patch);
    kv.set_int("train.seed", int64_t(cfg.seed));
    kv.set_bool("train.deterministic", cfg.deterministic);
    kv.set_bool("train.use_flips", cfg.use_flips);
    set_d("train.alpha", cfg.alpha);
    set_d("train.char_eps", cfg.char_eps);
    kv.set_bool("train.char_global_norm", cfg.char_global_norm);
    kv.set_int("train.checkpoint_every", cfg.checkpoint_every);
    kv.set_int("train.log_every", cfg.log_every);
    return kv;
}

TrainConfig train_config_from_kv(const KvList& kv) {
    TrainConfig d;
    TrainConfig cfg;
    cfg.lr_start = kv.get_double_or("train.lr_start", d.lr_start);
    cfg.lr_end = kv.get_double_or("train.lr_end", d.lr_end);
    cfg.beta1 = kv.get_double_or("train.beta1", d.beta1);
    cfg.beta2 = kv.get_double_or("train.beta2", d.beta2);
    cfg.adam_eps = kv.get_double_or("train.adam_eps", d.adam_eps);
    cfg.weight_decay = kv.get_double_or("train.weight_decay", d.weight_decay);
    cfg.grad_clip = kv.get_double_or("train.grad_clip", d.grad_clip);
    cfg.total_steps = kv.get_int_or("train.total_steps", d.total_steps);
    cfg.batch_size = kv.get_int_or("train.batch_size", d.batch_size);
    cfg.patch = kv.get_int_or("train.patch", d.patch);
    cfg.seed = uint64_t(kv.get_int_or("train.seed", int64_t(d.seed)));
    cfg.deterministic = kv.get_bool_or("train.deterministic", d.deterministic);
    cfg.use_flips = kv.get_bool_or("train.use_flips", d.use_flips);
    cfg.alpha = kv.get_double_or("train.alpha", d.alpha);
    cfg.char_eps = kv.get_double_or("train.char_eps", d.char_eps);
    cfg.char_global_norm = kv.get_bool_or("train.char_global_norm", d.char_global_norm);
    cfg.checkpoint_every = kv.get_int_or("train.checkpoint_every", d.checkpoint_every);
    cfg.log_every = kv.get_int_or("train.log_every", d.log_every);
    validate_train_config(cfg);
    return cfg;
}

template <typename T>
OptimizerState<T> init_optimizer(const ParamStore<T>& params) {
    OptimizerState<T> state;
    for (const Parameter<T>* p : params.list()) {
        state.m.push_back(Tensor<T>::zeros(p->value.shape()));
        state.v.push_back(Tensor<T>::zeros(p->value.shape()));
    }
    return state;
}

template <typename T>
void adamw_step(std::vector<Parameter<T>*> params, OptimizerState<T>& state, double lr,
                const TrainConfig& cfg) {
    if (params.size() != state.m.size())
        throw ContractError("adamw_step: state tracks " + std::to_string(state.m.size()) +
                            " parameters, got " + std::to_string(params.size()));
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter<T>* p = params[i];
        if (!p->has_grad())
            throw ContractError("adamw_step: missing gradient for parameter " + p->path);
        T* pv = p->value.mut();
        const T* g = p->grad.data();
        T* m = state.m[i].mut();
        T* v = state.v[i].mut();
        const int64_t n = p->value.size();
        for (int64_t j = 0; j < n; ++j) {
            pv[j] = static_cast<T>(double(pv[j]) * (1.0 - lr * cfg.weight_decay));
            const double gj = double(g[j]);
            const double mj = cfg.beta1 * double(m[j]) + (1.0 - cfg.beta1) * gj;
            const double vj = cfg.beta2 * double(v[j]) + (1.0 - cfg.beta2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            pv[j] = static_cast<T>(double(pv[j]) - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
        }
    }
}

double cosine_lr(int64_t step, int64_t total, double lr_start, double lr_end) {
    if (total < 1) throw ContractError("cosine_lr: total must be >= 1");
    if (step < 0) throw ContractError("cosine_lr: step must be >= 0");
    if (step >= total) return lr_end;
    const double x = 3.14159265358979323846 * double(step) / double(total);
    return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(x));
}

namespace {

double grad_global_norm(const std::vector<Parameter<float>*>& params) {
    double acc = 0;
    for (const Parameter<float>* p : params)
        for (int64_t j = 0; j < p->grad.size(); ++j) acc += double(p->grad[j]) * double(p->grad[j]);
    return std::sqrt(acc);
}

void scale_grads(std::vector<Parameter<float>*>& params, double s) {
    for (Parameter<float>* p : params) {
        float* g = p->grad.mut();
        for (int64_t j = 0; j < p->grad.size(); ++j) g[j] = float(double(g[j]) * s);
    }
}

}  // namespace

TrainResult train_loop(GridFormerModel<float>& model, const std::vector<PairSample>& data,
                       const TrainConfig& cfg, const std::string& out_dir,
                       std::ostream* trace_out) {
    validate_train_config(cfg);
    if (data.empty()) throw ContractError("train_loop: dataset is empty");
    const int64_t m = model.pad_multiple();
    if (cfg.patch % m != 0)
        throw ConfigError("train: patch " + std::to_string(cfg.patch) +
                          " must be a multiple of " + std::to_string(m));
    auto params = model.params().list();
    OptimizerState<float> state = init_optimizer(model.params());
    const FeatureExtractor<float> phi = FeatureExtractor<float>::standard();
    TrainResult result;
    if (trace_out) *trace_out << "step,l_char,l_per,l_total,lr\n";
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = order.size();  // forces a shuffle at step 0
    int64_t epoch = -1;
    for (int64_t step = 0; step < cfg.total_steps; ++step) {
        Tape<float> tape;
        Tensor<float> batch_char, batch_per;
        for (int64_t b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                ++epoch;
                std::mt19937_64 erng(derive_seed(cfg.seed, "epoch" + std::to_string(epoch)));
                std::shuffle(order.begin(), order.end(), erng);
                cursor = 0;
            }
            const PairSample& raw = data[order[cursor++]];
            const uint64_t aseed =
                derive_seed(cfg.seed, "aug" + std::to_string(step) + "_" + std::to_string(b));
            const PairSample s = augment(raw, aseed, cfg.patch, cfg.use_flips);
            std::vector<Tensor<float>> dpyr = make_pyramid(s.degraded, model.config().rows);
            std::vector<Tensor<float>> cpyr = make_pyramid(s.clean, model.config().rows);
            std::vector<Tensor<float>> out = model.forward(dpyr, &tape);
            Tensor<float> lc = charbonnier_ms(out, cpyr, cfg.char_eps, cfg.char_global_norm);
            Tensor<float> lp = cfg.alpha > 0 ? perceptual(out, cpyr, phi, &tape)
                                             : Tensor<float>::scalar(0.0f);
            batch_char = b == 0 ? lc : add(batch_char, lc);
            batch_per = b == 0 ? lp : add(batch_per, lp);
        }
        if (cfg.batch_size > 1) {
            batch_char = scale(batch_char, 1.0 / double(cfg.batch_size));
            batch_per = scale(batch_per, 1.0 / double(cfg.batch_size));
        }
        Tensor<float> loss = total_loss(batch_char, batch_per, cfg.alpha);
        const double lc = double(batch_char.item());
        const double lp = double(batch_per.item());
        const double lt = double(loss.item());
        if (!std::isfinite(lt))
            throw ContractError("train: non-finite loss at step " + std::to_string(step));
        for (Parameter<float>* p : params) p->zero_grad();
        tape.backward(loss);
        if (cfg.grad_clip > 0) {
            const double norm = grad_global_norm(params);
            if (norm > cfg.grad_clip) scale_grads(params, cfg.grad_clip / norm);
        }
        const double lr = cosine_lr(step, cfg.total_steps, cfg.lr_start, cfg.lr_end);
        adamw_step(params, state, lr, cfg);
        if (step % cfg.log_every == 0 || step == cfg.total_steps - 1) {
            result.trace.push_back({step, lc, lp, lt, lr});
            if (trace_out) {
                char buf[256];
                snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g\n",
                         static_cast<long long>(step), lc, lp, lt, lr);
                *trace_out << buf;
            }
        }
        if (!out_dir.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(out_dir + "/model_step" + std::to_string(step + 1) + ".gfck", model);
    }
    if (!out_dir.empty()) {
        result.checkpoint_path = out_dir + "/model.gfck";
        save_checkpoint(result.checkpoint_path, model);
    }
    return result;
}

namespace {

TensorF clamp_image(const TensorF& img) {
    TensorF out = img.clone();
    float* p = out.mut();
    for (int64_t i = 0; i < out.size(); ++i) p[i] = std::min(1.0f, std::max(0.0f, p[i]));
    return out;
}

EvalRow metrics_row(const std::string& id, const TensorF& a, const TensorF& b) {
    EvalRow row;
    row.id = id;
    row.psnr_rgb = psnr(a, b, PsnrMode::Rgb);
    row.psnr_y = psnr(a, b, PsnrMode::Y);
    row.ssim_val = ssim(a, b);
    return row;
}

}  // namespace

std::vector<EvalRow> evaluate(const GridFormerModel<float>& model,
                              const std::vector<PairSample>& data) {
    std::vector<EvalRow> rows;
    for (const PairSample& s : data) {
        TensorF restored = clamp_image(model.restore(s.degraded, nullptr));
        rows.push_back(metrics_row(s.id, restored, s.clean));
    }
    return rows;
}

std::vector<EvalRow> evaluate_baseline(const std::vector<PairSample>& data) {
    std::vector<EvalRow> rows;
    for (const PairSample& s : data) rows.push_back(metrics_row(s.id, s.degraded, s.clean));
    return rows;
}

void write_eval_csv(std::ostream& os, const std::vector<EvalRow>& rows) {
    os << "id,psnr_rgb,psnr_y,ssim\n";
    for (const EvalRow& r : rows) {
        char buf[256];
        snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f\n", r.id.c_str(), r.psnr_rgb, r.psnr_y,
                 r.ssim_val);
        os << buf;
    }
}

double mean_psnr_rgb(const std::vector<EvalRow>& rows) {
    if (rows.empty()) throw ContractError("mean_psnr_rgb: no rows");
    double acc = 0;
    for (const EvalRow& r : rows) acc += r.psnr_rgb;
    return acc / double(rows.size());
}

namespace {

// Deterministic probe elements: ends plus seeded interior picks.
std::vector<int64_t> sample_indices(int64_t n, int64_t want, std::mt19937_64& rng) {
    std::vector<int64_t> idx;
    if (n <= want) {
        idx.resize(size_t(n));
        std::iota(idx.begin(), idx.end(), 0);
        return idx;
    }
    idx.push_back(0);
    idx.push_back(n - 1);
    std::uniform_int_distribution<int64_t> pick(1, n - 2);
    while (int64_t(idx.size()) < want) {
        const int64_t c = pick(rng);
        if (std::find(idx.begin(), idx.end(), c) == idx.end()) idx.push_back(c);
    }
    return idx;
}

}  // namespace

GradcheckReport gradcheck_model(const GridConfig& cfg, uint64_t seed, int64_t extent,
                                int64_t samples_per_tensor, double rel_tol, double abs_floor) {
    validate_grid_config(cfg);
    GridFormerModel<double> model(cfg, seed);
    std::mt19937_64 rng(seed ^ 0xda3e39cb94b95bdbull);
    // Jitter away from the init symmetries (zero biases, equal fusion
    // weights) so no relu sits on its kink within the probe step.
    for (Parameter<double>* p : model.params().list()) {
        std::uniform_real_distribution<double> u(-0.05, 0.05);
        double* pv = p->value.mut();
        for (int64_t j = 0; j < p->value.size(); ++j) pv[j] += u(rng);
    }
    const Tensor<double> degraded =
        Tensor<double>::uniform(Shape{1, 3, extent, extent}, rng, 0.0, 1.0);
    const Tensor<double> clean = Tensor<double>::uniform(Shape{1, 3, extent, extent}, rng, 0.0, 1.0);
    const std::vector<Tensor<double>> dpyr = make_pyramid(degraded, cfg.rows);
    const std::vector<Tensor<double>> cpyr = make_pyramid(clean, cfg.rows);
    const FeatureExtractor<double> phi = FeatureExtractor<double>::standard();
    const double alpha = 0.1;
    const double eps = 1e-3;
    Tape<double>* const no_tape = nullptr;
    auto loss_value = [&]() {
        std::vector<Tensor<double>> out = model.forward(dpyr, no_tape);
        Tensor<double> lc = charbonnier_ms(out, cpyr, eps);
        Tensor<double> lp = perceptual(out, cpyr, phi, no_tape);
        return double(total_loss(lc, lp, alpha).item());
    };
    {
        Tape<double> tape;
        std::vector<Tensor<double>> out = model.forward(dpyr, &tape);
        Tensor<double> lc = charbonnier_ms(out, cpyr, eps);
        Tensor<double> lp = perceptual(out, cpyr, phi, &tape);
        tape.backward(total_loss(lc, lp, alpha));
    }
    GradcheckReport report;
    report.worst_path = "-";
    for (Parameter<double>* p : model.params().list()) {
        if (!p->has_grad())
            throw ContractError("gradcheck: missing gradient for parameter " + p->path);
        report.tensors_checked += 1;
        double* pv = p->value.mut();
        for (int64_t j : sample_indices(p->value.size(), samples_per_tensor, rng)) {
            const double saved = pv[j];
            const double an = double(p->grad[j]);
            // A relu kink inside the probe window biases the central
            // difference by a constant, so shrink the step until the window
            // clears the nearest kink (or the budget runs out).
            double best_rel = std::numeric_limits<double>::infinity();
            for (double hs : {1e-6, 1e-7, 3e-8, 1e-8}) {
                const double h = hs * std::max(1.0, std::fabs(saved));
                pv[j] = saved + h;
                const double up = loss_value();
                pv[j] = saved - h;
                const double dn = loss_value();
                pv[j] = saved;
                const double fd = (up - dn) / (2.0 * h);
                const double diff = std::fabs(fd - an);
                const double rel = diff <= abs_floor
                                       ? 0.0
                                       : diff / std::max({std::fabs(fd), std::fabs(an), abs_floor});
                best_rel = std::min(best_rel, rel);
                if (best_rel < rel_tol * 0.1) break;
            }
            report.elements_checked += 1;
            if (best_rel > report.worst_rel) {
                report.worst_rel = best_rel;
                report.worst_path = p->path + "[" + std::to_string(j) + "]";
            }
        }
    }
    report.pass = report.worst_rel < rel_tol;
    return report;
}

template OptimizerState<float> init_optimizer<float>(const ParamStore<float>&);
template OptimizerState<double> init_optimizer<double>(const ParamStore<double>&);
template void adamw_step<float>(std::vector<Parameter<float>*>, OptimizerState<float>&, double,
                                const TrainConfig&);
template void adamw_step<double>(std::vector<Parameter<double>*>, OptimizerState<double>&, double,
                                 const TrainConfig&);

}  // namespace gridformer
