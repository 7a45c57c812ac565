#pragma once

#include "gridformer/cesa.hpp"

namespace gridformer {

struct RdtbConfig {
    int64_t channels = 48;  // C, block working width
    int64_t growth = 16;    // G, per-layer dense growth
    int64_t num_rdtl = 3;
    int64_t cetls_per_rdtl = 2;
    CetlConfig cetl;  // channels field is overridden with C
    bool dense_connections = true;
    bool local_fusion = true;
    bool local_skip = true;
};

void validate_rdtb_config(const RdtbConfig& cfg);

template <typename T>
struct RdtlWeights {
    Conv2dLayer<T> entry;  // 1x1, dense state -> C
    std::vector<CetlWeights<T>> cetls;
    bool has_tail = false;
    Conv2dLayer<T> tail;  // 1x1, C -> G (dense mode)
};

template <typename T>
struct RdtbWeights {
    RdtbConfig cfg;
    std::vector<RdtlWeights<T>> rdtls;
    Conv2dLayer<T> fuse;  // 1x1, no bias
};

template <typename T>
RdtbWeights<T> make_rdtb(ParamStore<T>& store, const std::string& path, RdtbConfig cfg,
                         std::mt19937_64& rng);

template <typename T>
Tensor<T> rdtl_forward(const Tensor<T>& x, const RdtlWeights<T>& w, Tape<T>* tape);

template <typename T>
Tensor<T> rdtb_forward(const Tensor<T>& x, const RdtbWeights<T>& w, Tape<T>* tape);

}  // namespace gridformer
