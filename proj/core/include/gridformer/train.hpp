#pragma once

#include <iosfwd>

#include "gridformer/data.hpp"
#include "gridformer/grid.hpp"
#include "gridformer/losses.hpp"

namespace gridformer {

struct TrainConfig {
    double lr_start = 3e-4;
    double lr_end = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 1e-4;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
    int64_t total_steps = 5000;
    int64_t batch_size = 1;
    int64_t patch = 32;
    uint64_t seed = 1;
    bool deterministic = true;
    bool use_flips = true;
    double alpha = 0.1;
    double char_eps = 1e-3;
    bool char_global_norm = false;
    int64_t checkpoint_every = 0;  // 0 = final checkpoint only
    int64_t log_every = 1;
};

void validate_train_config(const TrainConfig& cfg);
KvList train_config_kv(const TrainConfig& cfg);
TrainConfig train_config_from_kv(const KvList& kv);

template <typename T>
struct OptimizerState {
    std::vector<Tensor<T>> m;  // aligned with the parameter list order
    std::vector<Tensor<T>> v;
    int64_t step = 0;
};

template <typename T>
OptimizerState<T> init_optimizer(const ParamStore<T>& params);

// Decoupled weight decay, then the bias-corrected Adam update. Throws
// ContractError naming the first parameter without a gradient.
template <typename T>
void adamw_step(std::vector<Parameter<T>*> params, OptimizerState<T>& state, double lr,
                const TrainConfig& cfg);

// lr_end + 0.5 (lr_start - lr_end)(1 + cos(pi step/total)); clamps past total.
double cosine_lr(int64_t step, int64_t total, double lr_start, double lr_end);

struct TraceRow {
    int64_t step = 0;
    double l_char = 0;
    double l_per = 0;
    double l_total = 0;
    double lr = 0;
};

struct TrainResult {
    std::vector<TraceRow> trace;
    std::string checkpoint_path;
};

// Steps over seeded epoch permutations of `data`: augment, pyramid forward,
// combined loss, backward, AdamW with the cosine schedule. Writes the trace
// as CSV to `trace_out` when given and a final checkpoint under `out_dir`
// (empty = no checkpoint). Throws ContractError naming the step on a
// non-finite loss.
TrainResult train_loop(GridFormerModel<float>& model, const std::vector<PairSample>& data,
                       const TrainConfig& cfg, const std::string& out_dir,
                       std::ostream* trace_out = nullptr);

struct EvalRow {
    std::string id;
    double psnr_rgb = 0;
    double psnr_y = 0;
    double ssim_val = 0;
};

// Restored-vs-clean metrics per sample; restored outputs are clamped to [0,1].
std::vector<EvalRow> evaluate(const GridFormerModel<float>& model,
                              const std::vector<PairSample>& data);
// Degraded-vs-clean metrics (the no-model baseline).
std::vector<EvalRow> evaluate_baseline(const std::vector<PairSample>& data);
void write_eval_csv(std::ostream& os, const std::vector<EvalRow>& rows);
double mean_psnr_rgb(const std::vector<EvalRow>& rows);

struct GradcheckReport {
    int64_t tensors_checked = 0;
    int64_t elements_checked = 0;
    double worst_rel = 0;
    std::string worst_path;
    bool pass = false;
};

// f64 end-to-end check of the combined loss: one backward pass vs central
// finite differences on sampled elements of every parameter tensor.
GradcheckReport gradcheck_model(const GridConfig& cfg, uint64_t seed, int64_t extent,
                                int64_t samples_per_tensor = 4, double rel_tol = 1e-4,
                                double abs_floor = 1e-8);

}  // namespace gridformer
