#pragma once

#include "gridformer/nn.hpp"

namespace gridformer {

struct CetlConfig {
    int64_t channels = 48;
    int64_t sample_stride = 4;  // r
    int64_t heads_per_half = 1;
    int64_t ffn_expansion = 2;
    bool use_feature_sampling = true;
    bool use_channel_split = true;
    bool use_local_enhancement = true;
    bool use_norm = true;
};

// Throws ConfigError on odd channels in split mode, indivisible head counts,
// or out-of-range strides/expansions.
void validate_cetl_config(const CetlConfig& cfg);

template <typename T>
struct CetlWeights {
    CetlConfig cfg;
    LayerNormChanLayer<T> norm1, norm2;           // absent when !use_norm
    Conv2dLayer<T> q1, k1, v1;                    // per half, or the full-C branch
    Conv2dLayer<T> q2, k2, v2;                    // second half (split mode only)
    ConvTranspose2dLayer<T> le_deconv;            // kernel = stride = r
    Conv2dLayer<T> le_conv;                       // 1x1
    Conv2dLayer<T> ffn1, ffn2;
};

template <typename T>
CetlWeights<T> make_cetl(ParamStore<T>& store, const std::string& path, CetlConfig cfg,
                         std::mt19937_64& rng);

// Z = Avg_r(Z_in); identity when sampling is disabled or r == 1.
template <typename T>
Tensor<T> feature_sample(const Tensor<T>& z_in, int64_t r, bool enabled);

// Channel-token attention over sampled features. Split mode: halves attend
// independently, outputs use the other half's values. attn_maps, when given,
// receives the per-head softmax matrices (rows sum to 1).
template <typename T>
Tensor<T> compact_attention(const Tensor<T>& z, const CetlWeights<T>& w, Tape<T>* tape,
                            std::vector<Tensor<T>>* attn_maps = nullptr);

// Z_out = Conv1x1(Deconv(Z_hat)); restores pre-sampling extents. Without the
// enhancement stage this is a parameter-free nearest upsample.
template <typename T>
Tensor<T> local_enhance(const Tensor<T>& z_hat, const CetlWeights<T>& w, Tape<T>* tape);

template <typename T>
Tensor<T> ffn(const Tensor<T>& x, const CetlWeights<T>& w, Tape<T>* tape);

// u = Z_in + LE(attn(FS(norm1(Z_in)))); out = u + FFN(norm2(u))
template <typename T>
Tensor<T> cetl_forward(const Tensor<T>& z_in, const CetlWeights<T>& w, Tape<T>* tape,
                       std::vector<Tensor<T>>* attn_maps = nullptr);

// Attention-matmul MACs for one CETL at sampled token count hw: the q·k^T and
// attn·v products over both halves, per batch element.
int64_t compact_attention_macs(int64_t channels, int64_t sampled_hw, bool split,
                               int64_t heads_per_half = 1);

// Reference cost of attending over hw spatial tokens instead; head- and
// split-independent.
int64_t token_attention_macs(int64_t channels, int64_t hw);

}  // namespace gridformer
