// gridformer: synth | train | eval | infer | profile | gradcheck | ablate
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridformer/data.hpp"
#include "gridformer/grid.hpp"
#include "gridformer/profile.hpp"
#include "gridformer/train.hpp"

namespace fs = std::filesystem;
using namespace gridformer;

namespace {

// --config accepts a built-in preset name or a key=value file.
GridConfig resolve_grid_config(const std::string& config_arg) {
    if (config_arg.empty()) return GridConfig{};
    if (is_preset_name(config_arg)) return preset_config(config_arg);
    return grid_config_from_kv(load_kv_file(config_arg));
}

TrainConfig resolve_train_config(const std::string& config_arg) {
    if (config_arg.empty() || is_preset_name(config_arg)) return TrainConfig{};
    return train_config_from_kv(load_kv_file(config_arg));
}

std::string widths_line(const GridConfig& cfg) {
    std::string s = "rows=" + std::to_string(cfg.rows) +
                    " base_channels=" + std::to_string(cfg.base_channels) + " row widths ";
    for (int64_t i = 0; i < cfg.rows; ++i) {
        if (i) s += "/";
        s += std::to_string(cfg.base_channels << i);
    }
    return s;
}

std::ofstream open_out_file(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    return os;
}

GridFormerModel<float> model_from_checkpoint(const std::string& path) {
    GridFormerModel<float> model(checkpoint_config(path), 0);
    load_checkpoint(path, model);
    return model;
}

// <data>/test when present, otherwise <data> itself.
std::string pick_eval_dir(const std::string& data_dir) {
    return fs::exists(data_dir + "/test/manifest.txt") ? data_dir + "/test" : data_dir;
}

int run_synth(const std::string& out_dir, const SynthDatasetConfig& cfg) {
    write_dataset(out_dir, cfg);
    std::cout << "wrote " << cfg.train_count << " train + " << cfg.test_count << " test " << cfg.kind
              << " pairs at " << cfg.extent << "x" << cfg.extent << " under " << out_dir << "\n";
    return 0;
}

int run_train(const std::string& config_arg, const std::string& data_dir,
              const std::string& out_dir, const TrainConfig& cfg) {
    const GridConfig gcfg = resolve_grid_config(config_arg);
    const std::string train_dir =
        fs::exists(data_dir + "/train/manifest.txt") ? data_dir + "/train" : data_dir;
    const std::vector<PairSample> data = load_dataset_dir(train_dir);
    fs::create_directories(out_dir);
    GridFormerModel<float> model(gcfg, cfg.seed);
    {
        std::ofstream cfg_out = open_out_file(out_dir + "/config.txt");
        cfg_out << grid_config_kv(gcfg).text() << train_config_kv(cfg).text();
    }
    std::ofstream trace = open_out_file(out_dir + "/trace.csv");
    const TrainResult result = train_loop(model, data, cfg, out_dir, &trace);
    trace.close();
    const TraceRow& last = result.trace.back();
    std::cout << "trained " << cfg.total_steps << " steps on " << data.size() << " pairs; final"
              << " l_total=" << last.l_total << "\n"
              << "trace: " << out_dir << "/trace.csv\ncheckpoint: " << result.checkpoint_path
              << "\n";
    return 0;
}

int run_eval(const std::string& data_dir, const std::string& checkpoint,
             const std::string& out_dir) {
    const std::vector<PairSample> data = load_dataset_dir(pick_eval_dir(data_dir));
    std::vector<EvalRow> rows;
    if (checkpoint.empty()) {
        rows = evaluate_baseline(data);
    } else {
        const GridFormerModel<float> model = model_from_checkpoint(checkpoint);
        rows = evaluate(model, data);
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream os = open_out_file(out_dir + "/eval.csv");
        write_eval_csv(os, rows);
    } else {
        write_eval_csv(std::cout, rows);
    }
    double ssim_acc = 0, py_acc = 0;
    for (const EvalRow& r : rows) {
        ssim_acc += r.ssim_val;
        py_acc += r.psnr_y;
    }
    char buf[160];
    snprintf(buf, sizeof buf, "mean psnr_rgb=%.4f psnr_y=%.4f ssim=%.6f over %zu images\n",
             mean_psnr_rgb(rows), py_acc / double(rows.size()), ssim_acc / double(rows.size()),
             rows.size());
    std::cout << (checkpoint.empty() ? "baseline (no checkpoint): " : "model: ") << buf;
    return 0;
}

int run_infer(const std::string& checkpoint, const std::string& input, const std::string& out) {
    const GridFormerModel<float> model = model_from_checkpoint(checkpoint);
    std::vector<std::pair<std::string, std::string>> jobs;  // input path -> output path
    if (fs::is_directory(input)) {
        fs::create_directories(out);
        for (const auto& entry : fs::directory_iterator(input))
            if (entry.path().extension() == ".ppm")
                jobs.emplace_back(entry.path().string(),
                                  (fs::path(out) / entry.path().filename()).string());
        std::sort(jobs.begin(), jobs.end());
        if (jobs.empty()) throw IoError("no .ppm images under " + input);
    } else {
        std::string dst = out;
        if (fs::is_directory(out) || out.empty())
            dst = (fs::path(out.empty() ? "." : out) / fs::path(input).filename()).string();
        jobs.emplace_back(input, dst);
    }
    for (const auto& [src, dst] : jobs) {
        TensorF img = load_image(src);
        TensorF restored = model.restore(img, nullptr);
        float* p = restored.mut();
        for (int64_t i = 0; i < restored.size(); ++i) p[i] = std::min(1.0f, std::max(0.0f, p[i]));
        save_image(dst, restored);
        std::cout << src << " -> " << dst << "\n";
    }
    return 0;
}

int run_profile(const std::string& config_arg, int64_t extent, int64_t depth,
                const std::string& out_path) {
    const GridConfig cfg = resolve_grid_config(config_arg);
    const ProfileReport report = profile_model(cfg, extent, extent);
    std::ofstream file;
    if (!out_path.empty()) file = open_out_file(out_path);
    std::ostream& os = out_path.empty() ? std::cout : file;
    os << widths_line(cfg) << "\n";
    write_profile_report(os, report, depth);
    return 0;
}

int run_gradcheck(const std::string& config_arg, uint64_t seed, int64_t extent, int64_t samples,
                  double tol) {
    const GridConfig cfg = config_arg.empty() ? preset_config("micro") : resolve_grid_config(config_arg);
    const GradcheckReport r = gradcheck_model(cfg, seed, extent, samples, tol);
    char buf[256];
    snprintf(buf, sizeof buf,
             "checked %lld elements across %lld tensors; worst rel err %.3e at %s\n",
             static_cast<long long>(r.elements_checked), static_cast<long long>(r.tensors_checked),
             r.worst_rel, r.worst_path.c_str());
    std::cout << buf << (r.pass ? "gradcheck PASS\n" : "gradcheck FAIL\n");
    return r.pass ? 0 : 2;
}

int run_ablate(const std::string& config_arg, int64_t extent, const std::string& out_path) {
    const GridConfig cfg = resolve_grid_config(config_arg);
    const std::vector<AblateRow> rows = ablate_table(cfg, extent);
    std::ofstream file;
    if (!out_path.empty()) file = open_out_file(out_path);
    std::ostream& os = out_path.empty() ? std::cout : file;
    write_ablate_csv(os, rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridformer: transformer-in-grid restoration of weather-degraded images"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    std::string config_arg, data_dir, out_arg, checkpoint, input;
    SynthDatasetConfig synth_cfg;
    TrainConfig train_cfg;
    int64_t extent = 256, depth = 3, samples = 4;
    uint64_t seed = 7;
    double tol = 1e-4;

    CLI::App* synth = app.add_subcommand("synth", "write a synthetic paired dataset");
    synth->add_option("--out", out_arg, "output dataset directory")->required();
    synth->add_option("--kind", synth_cfg.kind, "haze|rain|snow|raindrop|mixed");
    synth->add_option("--train-count", synth_cfg.train_count, "training pairs");
    synth->add_option("--test-count", synth_cfg.test_count, "held-out pairs");
    synth->add_option("--extent", synth_cfg.extent, "square image extent");
    synth->add_option("--seed", synth_cfg.seed, "dataset seed");

    CLI::App* train = app.add_subcommand("train", "train a model on a dataset directory");
    train->add_option("--config", config_arg, "preset name or key=value file");
    train->add_option("--data", data_dir, "dataset root (uses <data>/train)")->required();
    train->add_option("--out", out_arg, "run directory for trace + checkpoints")->required();
    CLI::Option* steps_opt = train->add_option("--steps", train_cfg.total_steps, "training steps");
    CLI::Option* seed_opt = train->add_option("--seed", train_cfg.seed, "model + sampling seed");
    CLI::Option* batch_opt = train->add_option("--batch", train_cfg.batch_size, "batch size");
    CLI::Option* patch_opt = train->add_option("--patch", train_cfg.patch, "square crop extent");
    CLI::Option* alpha_opt = train->add_option("--alpha", train_cfg.alpha, "perceptual weight");
    CLI::Option* flips_opt = train->add_option("--use-flips", train_cfg.use_flips, "flip augmentation");
    CLI::Option* det_opt =
        train->add_option("--deterministic", train_cfg.deterministic, "deterministic run");
    CLI::Option* ckpt_opt =
        train->add_option("--checkpoint-every", train_cfg.checkpoint_every, "periodic checkpoints");
    CLI::Option* log_opt = train->add_option("--log-every", train_cfg.log_every, "trace stride");

    CLI::App* eval_cmd = app.add_subcommand("eval", "psnr/ssim report over a test directory");
    eval_cmd->add_option("--data", data_dir, "dataset root (uses <data>/test)")->required();
    eval_cmd->add_option("--checkpoint", checkpoint, "model file; omit for the degraded baseline");
    eval_cmd->add_option("--out", out_arg, "directory for eval.csv (default: stdout)");

    CLI::App* infer = app.add_subcommand("infer", "restore one image or a directory");
    infer->add_option("--checkpoint", checkpoint, "model file")->required();
    infer->add_option("--input", input, "a .ppm image or a directory of them")->required();
    infer->add_option("--out", out_arg, "output file or directory");

    CLI::App* profile = app.add_subcommand("profile", "parameter and MAC tree");
    profile->add_option("--config", config_arg, "preset name or key=value file");
    profile->add_option("--extent", extent, "square input extent");
    profile->add_option("--depth", depth, "tree depth to print");
    profile->add_option("--out", out_arg, "report file (default: stdout)");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--config", config_arg, "preset name or key=value file (default micro)");
    gradcheck->add_option("--seed", seed, "model + probe seed");
    gradcheck->add_option("--extent", extent, "square input extent")->default_val(16);
    gradcheck->add_option("--samples", samples, "probes per parameter tensor");
    gradcheck->add_option("--tol", tol, "relative error tolerance");

    CLI::App* ablate = app.add_subcommand("ablate", "config sweep comparison table");
    ablate->add_option("--config", config_arg, "preset name or key=value file");
    ablate->add_option("--extent", extent, "square input extent");
    ablate->add_option("--out", out_arg, "csv file (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth(out_arg, synth_cfg);
        if (train->parsed()) {
            TrainConfig cfg = resolve_train_config(config_arg);
            if (*steps_opt) cfg.total_steps = train_cfg.total_steps;
            if (*seed_opt) cfg.seed = train_cfg.seed;
            if (*batch_opt) cfg.batch_size = train_cfg.batch_size;
            if (*patch_opt) cfg.patch = train_cfg.patch;
            if (*alpha_opt) cfg.alpha = train_cfg.alpha;
            if (*flips_opt) cfg.use_flips = train_cfg.use_flips;
            if (*det_opt) cfg.deterministic = train_cfg.deterministic;
            if (*ckpt_opt) cfg.checkpoint_every = train_cfg.checkpoint_every;
            if (*log_opt) cfg.log_every = train_cfg.log_every;
            validate_train_config(cfg);
            return run_train(config_arg, data_dir, out_arg, cfg);
        }
        if (eval_cmd->parsed()) return run_eval(data_dir, checkpoint, out_arg);
        if (infer->parsed()) return run_infer(checkpoint, input, out_arg);
        if (profile->parsed()) return run_profile(config_arg, extent, depth, out_arg);
        if (gradcheck->parsed()) return run_gradcheck(config_arg, seed, extent, samples, tol);
        if (ablate->parsed()) return run_ablate(config_arg, extent, out_arg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
