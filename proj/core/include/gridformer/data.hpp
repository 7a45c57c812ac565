#pragma once

#include <string>
#include <vector>

#include "gridformer/kv.hpp"
#include "gridformer/tensor.hpp"

namespace gridformer {

// All images here are [1,3,H,W] float tensors with values in [0,1].

struct DegradationSpec {
    std::string kind = "haze";  // haze | rain | snow | raindrop | mixed
    uint64_t seed = 0;

    // haze: I = J*t + A*(1-t), t = exp(-beta*d)
    double airlight[3] = {0.9, 0.9, 0.9};  // each in [0.7, 1.0]
    double beta = 1.0;
    std::string depth_style = "noise";  // noise | ramp

    // rain
    int64_t streak_count = 80;
    double streak_length = 12.0;
    double streak_angle_deg = 70.0;
    double streak_alpha = 0.6;

    // snow
    int64_t flake_count = 60;
    double flake_radius_min = 1.0;
    double flake_radius_max = 3.0;
    double flake_alpha = 0.7;

    // raindrop
    int64_t drop_count = 12;
    double drop_radius_min = 3.0;
    double drop_radius_max = 7.0;
    double drop_blur = 2.0;
};

void validate_degradation_spec(const DegradationSpec& spec);
KvList degradation_spec_kv(const DegradationSpec& spec);
DegradationSpec degradation_spec_from_kv(const KvList& kv);

TensorF synth_haze(const TensorF& clean, const DegradationSpec& spec);
TensorF synth_rain(const TensorF& clean, const DegradationSpec& spec);
TensorF synth_snow(const TensorF& clean, const DegradationSpec& spec);
TensorF synth_raindrop(const TensorF& clean, const DegradationSpec& spec);
// Dispatches on spec.kind; "mixed" chains haze, rain, snow, raindrop with
// derived sub-seeds.
TensorF degrade(const TensorF& clean, const DegradationSpec& spec);

// Seeded smooth depth map in [0,1], [1,1,H,W].
TensorF synth_depth_map(int64_t h, int64_t w, uint64_t seed, const std::string& style);

// Procedural clean image: smooth color field plus seeded geometric shapes.
TensorF synth_clean_image(int64_t h, int64_t w, uint64_t seed);

// 2x2 box-filter pyramid; level 0 extents must divide by 2^(levels-1).
template <typename T>
std::vector<Tensor<T>> make_pyramid(const Tensor<T>& img, int64_t levels = 3);

TensorF flip_horizontal(const TensorF& img);
TensorF flip_vertical(const TensorF& img);

struct PairSample {
    std::string id;
    TensorF degraded;
    TensorF clean;
};

// Seeded square crop to `patch`, then identical random h/v flips on both
// images (flips skipped when use_flips is off).
PairSample augment(const PairSample& pair, uint64_t seed, int64_t patch, bool use_flips = true);

// 8-bit binary RGB (PPM P6); save quantizes round-half-up, load rescales to
// [0,1]. load(save(x)) deviates by at most 1/510 per value.
void save_image(const std::string& path, const TensorF& img);
TensorF load_image(const std::string& path);

struct SynthDatasetConfig {
    std::string kind = "haze";
    int64_t train_count = 64;
    int64_t test_count = 16;
    int64_t extent = 64;
    uint64_t seed = 1;
};

// Writes <dir>/{train,test}/{clean,degraded}/<id>.ppm plus
// <dir>/{train,test}/manifest.txt with "id key=value ..." lines. Each
// image's randomness derives from (seed, id) alone.
void write_dataset(const std::string& dir, const SynthDatasetConfig& cfg);

// Loads every manifest id; throws IoError on missing files.
std::vector<PairSample> load_dataset_dir(const std::string& dir);

// Stable per-image stream: splitmix of the global seed and the id hash.
uint64_t derive_seed(uint64_t global_seed, const std::string& id);

}  // namespace gridformer
