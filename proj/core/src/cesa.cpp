#include "gridformer/cesa.hpp"

#include <cmath>

#include "gridformer/errors.hpp"
#include "gridformer/ops.hpp"

namespace gridformer {

void validate_cetl_config(const CetlConfig& cfg) {
    if (cfg.channels < 1) throw ConfigError("cetl: channels must be positive");
    if (cfg.sample_stride < 1) throw ConfigError("cetl: sample_stride must be >= 1");
    if (cfg.heads_per_half < 1) throw ConfigError("cetl: heads_per_half must be >= 1");
    if (cfg.ffn_expansion < 1) throw ConfigError("cetl: ffn_expansion must be >= 1");
    if (cfg.use_channel_split) {
        if (cfg.channels % 2 != 0)
            throw ConfigError("cetl: channel split requires even channels, got " +
                              std::to_string(cfg.channels));
        if ((cfg.channels / 2) % cfg.heads_per_half != 0)
            throw ConfigError("cetl: half width " + std::to_string(cfg.channels / 2) +
                              " not divisible by heads_per_half " +
                              std::to_string(cfg.heads_per_half));
    } else if (cfg.channels % cfg.heads_per_half != 0) {
        throw ConfigError("cetl: channels " + std::to_string(cfg.channels) +
                          " not divisible by heads_per_half " +
                          std::to_string(cfg.heads_per_half));
    }
}

template <typename T>
CetlWeights<T> make_cetl(ParamStore<T>& store, const std::string& path, CetlConfig cfg,
                         std::mt19937_64& rng) {
    validate_cetl_config(cfg);
    CetlWeights<T> w;
    w.cfg = cfg;
    const int64_t c = cfg.channels;
    const int64_t cb = cfg.use_channel_split ? c / 2 : c;
    const int64_t r = cfg.use_feature_sampling ? cfg.sample_stride : 1;
    if (cfg.use_norm) w.norm1 = make_layer_norm(store, path + ".norm1", c);
    ConvSpec proj{cb, cb, 1, 1, 0, true};
    w.q1 = make_conv2d(store, path + ".q1", proj, rng);
    w.k1 = make_conv2d(store, path + ".k1", proj, rng);
    w.v1 = make_conv2d(store, path + ".v1", proj, rng);
    if (cfg.use_channel_split) {
        w.q2 = make_conv2d(store, path + ".q2", proj, rng);
        w.k2 = make_conv2d(store, path + ".k2", proj, rng);
        w.v2 = make_conv2d(store, path + ".v2", proj, rng);
    }
    if (cfg.use_local_enhancement) {
        w.le_deconv = make_conv_transpose2d(store, path + ".le.deconv",
                                            ConvSpec{c, c, r, r, 0, true}, rng);
        w.le_conv = make_conv2d(store, path + ".le.conv", ConvSpec{c, c, 1, 1, 0, true}, rng);
    }
    const int64_t ce = c * cfg.ffn_expansion;
    w.ffn1 = make_conv2d(store, path + ".ffn1", ConvSpec{c, ce, 1, 1, 0, true}, rng);
    w.ffn2 = make_conv2d(store, path + ".ffn2", ConvSpec{ce, c, 1, 1, 0, true}, rng);
    if (cfg.use_norm) w.norm2 = make_layer_norm(store, path + ".norm2", c);
    return w;
}

template <typename T>
Tensor<T> feature_sample(const Tensor<T>& z_in, int64_t r, bool enabled) {
    if (!enabled || r == 1) return z_in;
    return avg_pool2d(z_in, r);
}

namespace {

// q, k, v: [N, Cb, h, w]. Heads are contiguous channel blocks, so the reshape
// to [N*heads, Cb/heads, h*w] is layout-preserving.
template <typename T>
Tensor<T> attend(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int64_t heads,
                 std::vector<Tensor<T>>* attn_maps) {
    const Shape& s = q.shape();
    const int64_t hw = s[2] * s[3];
    Shape flat{s[0] * heads, s[1] / heads, hw};
    Tensor<T> qf = reshape(q, flat);
    Tensor<T> kf = reshape(k, flat);
    Tensor<T> vf = reshape(v, flat);
    Tensor<T> logits = scale(bmm(qf, transpose_last2(kf)), 1.0 / std::sqrt(double(hw)));
    Tensor<T> a = softmax_rows(logits);
    if (attn_maps) attn_maps->push_back(a);
    return reshape(bmm(a, vf), s);
}

}  // namespace

template <typename T>
Tensor<T> compact_attention(const Tensor<T>& z, const CetlWeights<T>& w, Tape<T>* tape,
                            std::vector<Tensor<T>>* attn_maps) {
    const CetlConfig& cfg = w.cfg;
    if (z.shape().rank() != 4 || z.shape()[1] != cfg.channels)
        throw ShapeError("compact_attention: expected [N," + std::to_string(cfg.channels) +
                         ",h,w], got " + z.shape().str());
    if (!cfg.use_channel_split) {
        Tensor<T> q = w.q1(z, tape), k = w.k1(z, tape), v = w.v1(z, tape);
        return attend(q, k, v, cfg.heads_per_half, attn_maps);
    }
    const int64_t half = cfg.channels / 2;
    std::vector<Tensor<T>> zs = split_channels(z, {half, half});
    Tensor<T> q1 = w.q1(zs[0], tape), k1 = w.k1(zs[0], tape), v1 = w.v1(zs[0], tape);
    Tensor<T> q2 = w.q2(zs[1], tape), k2 = w.k2(zs[1], tape), v2 = w.v2(zs[1], tape);
    // Value exchange: each half's attention map reads the other half's values.
    Tensor<T> o1 = attend(q1, k1, v2, cfg.heads_per_half, attn_maps);
    Tensor<T> o2 = attend(q2, k2, v1, cfg.heads_per_half, attn_maps);
    return concat_channels<T>({o1, o2});
}

template <typename T>
Tensor<T> local_enhance(const Tensor<T>& z_hat, const CetlWeights<T>& w, Tape<T>* tape) {
    const CetlConfig& cfg = w.cfg;
    const int64_t r = cfg.use_feature_sampling ? cfg.sample_stride : 1;
    if (!cfg.use_local_enhancement) {
        return r == 1 ? z_hat : upsample_nearest(z_hat, r);
    }
    return w.le_conv(w.le_deconv(z_hat, tape), tape);
}

template <typename T>
Tensor<T> ffn(const Tensor<T>& x, const CetlWeights<T>& w, Tape<T>* tape) {
    return w.ffn2(relu(w.ffn1(x, tape)), tape);
}

template <typename T>
Tensor<T> cetl_forward(const Tensor<T>& z_in, const CetlWeights<T>& w, Tape<T>* tape,
                       std::vector<Tensor<T>>* attn_maps) {
    const CetlConfig& cfg = w.cfg;
    Tensor<T> a = cfg.use_norm ? w.norm1(z_in, tape) : z_in;
    a = feature_sample(a, cfg.sample_stride, cfg.use_feature_sampling);
    a = compact_attention(a, w, tape, attn_maps);
    Tensor<T> u = add(z_in, local_enhance(a, w, tape));
    Tensor<T> b = cfg.use_norm ? w.norm2(u, tape) : u;
    return add(u, ffn(b, w, tape));
}

int64_t compact_attention_macs(int64_t channels, int64_t sampled_hw, bool split,
                               int64_t heads_per_half) {
    const int64_t cb = split ? channels / 2 : channels;
    const int64_t branches = split ? 2 : 1;
    // Per branch, per head: logits cb/h x hw x cb/h plus attn.v cb/h x cb/h x hw.
    return branches * 2 * cb * (cb / heads_per_half) * sampled_hw;
}

int64_t token_attention_macs(int64_t channels, int64_t hw) {
    return 2 * channels * hw * hw;
}

#define GF_INSTANTIATE_CESA(T)                                                               \
    template CetlWeights<T> make_cetl<T>(ParamStore<T>&, const std::string&, CetlConfig,     \
                                         std::mt19937_64&);                                  \
    template Tensor<T> feature_sample<T>(const Tensor<T>&, int64_t, bool);                   \
    template Tensor<T> compact_attention<T>(const Tensor<T>&, const CetlWeights<T>&,         \
                                            Tape<T>*, std::vector<Tensor<T>>*);              \
    template Tensor<T> local_enhance<T>(const Tensor<T>&, const CetlWeights<T>&, Tape<T>*);  \
    template Tensor<T> ffn<T>(const Tensor<T>&, const CetlWeights<T>&, Tape<T>*);            \
    template Tensor<T> cetl_forward<T>(const Tensor<T>&, const CetlWeights<T>&, Tape<T>*,    \
                                       std::vector<Tensor<T>>*);

GF_INSTANTIATE_CESA(float)
GF_INSTANTIATE_CESA(double)

}  // namespace gridformer
