#pragma once

#include "gridformer/kv.hpp"
#include "gridformer/rdtb.hpp"

namespace gridformer {

struct GridConfig {
    int64_t rows = 3;
    int64_t fusion_columns = 5;
    int64_t base_channels = 48;  // C; row i runs at 2^i * C
    int64_t growth = 16;
    std::vector<int64_t> sampler_strides = {4, 2, 2};  // one per row
    int64_t cetls_per_rdtl = 2;
    int64_t heads_per_half = 1;
    int64_t ffn_expansion = 2;
    bool use_norm = true;
    bool use_feature_sampling = true;
    bool use_channel_split = true;
    bool use_local_enhancement = true;
    bool dense_connections = true;
    bool local_fusion = true;
    bool local_skip = true;
};

void validate_grid_config(const GridConfig& cfg);

// Built-in configs: "gridformer" (C=48), "gridformer-s" (C=32),
// "tiny" (C=8, G=4, 1 CETL/RDTL), "micro" (tiny with 2 fusion columns).
// Throws ConfigError for unknown names.
GridConfig preset_config(const std::string& name);
bool is_preset_name(const std::string& name);

// Canonical key=value block ("grid." prefix, fixed key order); the inverse
// accepts exactly these keys.
KvList grid_config_kv(const GridConfig& cfg);
GridConfig grid_config_from_kv(const KvList& kv);

// Column flow directions: the first half of the columns fuses top-down, a
// middle column (odd counts) runs plain, the rest fuse bottom-up.
enum class FlowDir { Down, Plain, Up };
FlowDir column_direction(int64_t column, int64_t fusion_columns);

template <typename T>
struct TransitionWeights {
    Conv2dLayer<T> conv;
};

// [N,C',H,W] -> [N,2C',H/2,W/2]: pixel_unshuffle(2) then 3x3 conv 4C' -> 2C'.
template <typename T>
Tensor<T> downsample_transition(const Tensor<T>& x, const TransitionWeights<T>& w, Tape<T>* tape);

// [N,2C',H,W] -> [N,C',2H,2W]: 3x3 conv 2C' -> 4C' then pixel_shuffle(2).
template <typename T>
Tensor<T> upsample_transition(const Tensor<T>& x, const TransitionWeights<T>& w, Tape<T>* tape);

// out = w1 (.) a + w2 (.) b, per-channel broadcast.
template <typename T>
Tensor<T> weighted_fusion(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& w1,
                          const Tensor<T>& w2);

template <typename T>
class GridFormerModel {
public:
    GridFormerModel(GridConfig cfg, uint64_t seed);

    const GridConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }

    // Smallest extent multiple accepted by forward(); at least 16.
    int64_t pad_multiple() const;

    std::vector<Tensor<T>> grid_head(const std::vector<Tensor<T>>& x, Tape<T>* tape) const;
    std::vector<Tensor<T>> grid_fusion(const std::vector<Tensor<T>>& f, Tape<T>* tape) const;
    std::vector<Tensor<T>> grid_tail(const std::vector<Tensor<T>>& fhat,
                                     const std::vector<Tensor<T>>& x, Tape<T>* tape) const;

    // head -> fusion -> tail on an already-divisible pyramid.
    std::vector<Tensor<T>> forward(const std::vector<Tensor<T>>& pyramid, Tape<T>* tape) const;

    // Reflect-pads the image to the next accepted multiple, builds the 2x2
    // box pyramid, runs forward, crops every level back.
    std::vector<Tensor<T>> restore_pyramid(const Tensor<T>& image, Tape<T>* tape) const;
    Tensor<T> restore(const Tensor<T>& image, Tape<T>* tape) const;

    // Internals exposed for targeted tests (zeroing, decoupling probes).
    struct FusionCell {
        RdtbWeights<T> gfl;
        bool has_site = false;
        TransitionWeights<T> trans;
        Parameter<T>* w1 = nullptr;
        Parameter<T>* w2 = nullptr;
    };
    std::vector<Conv2dLayer<T>>& embed_convs() { return embed_; }
    std::vector<RdtbWeights<T>>& head_gfls() { return head_gfl_; }
    std::vector<TransitionWeights<T>>& head_downs() { return head_down_; }
    std::vector<std::vector<FusionCell>>& fusion_cells() { return fusion_; }
    std::vector<RdtbWeights<T>>& tail_gfls() { return tail_gfl_; }
    std::vector<Conv2dLayer<T>>& tail_convs() { return tail_conv_; }

private:
    int64_t row_width(int64_t i) const { return (int64_t(1) << i) * cfg_.base_channels; }
    RdtbConfig row_rdtb_config(int64_t row) const;
    void check_pyramid(const std::vector<Tensor<T>>& x) const;

    GridConfig cfg_;
    ParamStore<T> store_;
    std::vector<Conv2dLayer<T>> embed_;
    std::vector<RdtbWeights<T>> head_gfl_;
    std::vector<TransitionWeights<T>> head_down_;
    std::vector<std::vector<FusionCell>> fusion_;  // [column][row]
    std::vector<RdtbWeights<T>> tail_gfl_;
    std::vector<Conv2dLayer<T>> tail_conv_;
};

// GFCK checkpoint: magic, u32 version, canonical config text, count-prefixed
// (path, GFT1 tensor) entries. Round trips bit-exactly; a config/parameter
// mismatch on load throws FormatError naming the first mismatched path.
template <typename T>
void save_checkpoint(const std::string& path, const GridFormerModel<T>& model);

template <typename T>
void load_checkpoint(const std::string& path, GridFormerModel<T>& model);

GridConfig checkpoint_config(const std::string& path);

}  // namespace gridformer
