#include "gridformer/rdtb.hpp"

#include "gridformer/errors.hpp"
#include "gridformer/ops.hpp"

namespace gridformer {

void validate_rdtb_config(const RdtbConfig& cfg) {
    if (cfg.channels < 1) throw ConfigError("rdtb: channels must be positive");
    if (cfg.growth < 1) throw ConfigError("rdtb: growth must be positive");
    if (cfg.num_rdtl < 1) throw ConfigError("rdtb: num_rdtl must be >= 1");
    if (cfg.cetls_per_rdtl < 1) throw ConfigError("rdtb: cetls_per_rdtl must be >= 1");
    CetlConfig cc = cfg.cetl;
    cc.channels = cfg.channels;
    validate_cetl_config(cc);
}

template <typename T>
RdtbWeights<T> make_rdtb(ParamStore<T>& store, const std::string& path, RdtbConfig cfg,
                         std::mt19937_64& rng) {
    validate_rdtb_config(cfg);
    RdtbWeights<T> w;
    w.cfg = cfg;
    const int64_t c = cfg.channels;
    const int64_t g = cfg.growth;
    CetlConfig cc = cfg.cetl;
    cc.channels = c;
    for (int64_t k = 0; k < cfg.num_rdtl; ++k) {
        RdtlWeights<T> layer;
        const std::string lp = path + ".rdtl" + std::to_string(k);
        const int64_t in_ch = cfg.dense_connections ? c + k * g : c;
        layer.entry = make_conv2d(store, lp + ".entry", ConvSpec{in_ch, c, 1, 1, 0, true}, rng);
        for (int64_t j = 0; j < cfg.cetls_per_rdtl; ++j)
            layer.cetls.push_back(make_cetl(store, lp + ".cetl" + std::to_string(j), cc, rng));
        // Without dense connections the chain stays at width C and no
        // growth projection exists.
        layer.has_tail = cfg.dense_connections;
        if (layer.has_tail)
            layer.tail = make_conv2d(store, lp + ".tail", ConvSpec{c, g, 1, 1, 0, true}, rng);
        w.rdtls.push_back(std::move(layer));
    }
    const int64_t fuse_in = cfg.dense_connections ? c + cfg.num_rdtl * g : c;
    const int64_t last_out = cfg.dense_connections ? g : c;
    // Local fusion reads the full dense state; without it a fixed-width conv
    // projects only the trailing layer output.
    const int64_t fi = cfg.local_fusion ? fuse_in : last_out;
    w.fuse = make_conv2d(store, path + ".lf", ConvSpec{fi, c, 1, 1, 0, false}, rng);
    return w;
}

template <typename T>
Tensor<T> rdtl_forward(const Tensor<T>& x, const RdtlWeights<T>& w, Tape<T>* tape) {
    Tensor<T> h = w.entry(x, tape);
    for (const CetlWeights<T>& cw : w.cetls) h = relu(cetl_forward(h, cw, tape));
    if (w.has_tail) h = w.tail(h, tape);
    return h;
}

template <typename T>
Tensor<T> rdtb_forward(const Tensor<T>& x, const RdtbWeights<T>& w, Tape<T>* tape) {
    const RdtbConfig& cfg = w.cfg;
    if (x.shape().rank() != 4 || x.shape()[1] != cfg.channels)
        throw ShapeError("rdtb_forward: expected [N," + std::to_string(cfg.channels) +
                         ",h,w], got " + x.shape().str());
    Tensor<T> fused;
    if (cfg.dense_connections) {
        Tensor<T> state = x;
        Tensor<T> last;
        for (const RdtlWeights<T>& layer : w.rdtls) {
            last = rdtl_forward(state, layer, tape);
            state = concat_channels<T>({state, last});
        }
        fused = w.fuse(cfg.local_fusion ? state : last, tape);
    } else {
        Tensor<T> h = x;
        for (const RdtlWeights<T>& layer : w.rdtls) h = rdtl_forward(h, layer, tape);
        fused = w.fuse(h, tape);
    }
    return cfg.local_skip ? add(fused, x) : fused;
}

#define GF_INSTANTIATE_RDTB(T)                                                             \
    template RdtbWeights<T> make_rdtb<T>(ParamStore<T>&, const std::string&, RdtbConfig,   \
                                         std::mt19937_64&);                                \
    template Tensor<T> rdtl_forward<T>(const Tensor<T>&, const RdtlWeights<T>&, Tape<T>*); \
    template Tensor<T> rdtb_forward<T>(const Tensor<T>&, const RdtbWeights<T>&, Tape<T>*);

GF_INSTANTIATE_RDTB(float)
GF_INSTANTIATE_RDTB(double)

}  // namespace gridformer
