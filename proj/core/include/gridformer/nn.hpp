#pragma once

#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "gridformer/ops.hpp"

namespace gridformer {

// Unique-path registry owning every trainable tensor of one model. Iteration
// order is creation order, which fixes checkpoint and optimizer order.
template <typename T>
class ParamStore {
public:
    Parameter<T>& create(const std::string& path, Tensor<T> init);
    Parameter<T>* find(const std::string& path);
    const Parameter<T>* find(const std::string& path) const;

    std::vector<Parameter<T>*> list();
    std::vector<const Parameter<T>*> list() const;
    size_t size() const { return params_.size(); }
    int64_t scalar_count() const;

private:
    std::vector<std::unique_ptr<Parameter<T>>> params_;
    std::unordered_map<std::string, Parameter<T>*> by_path_;
};

struct ConvSpec {
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int64_t kernel = 1;
    int64_t stride = 1;
    int64_t padding = 0;
    bool bias = true;
};

// Throws ConfigError unless channels/kernel/stride/padding are in range.
void validate_conv_spec(const ConvSpec& spec);

template <typename T>
struct Conv2dLayer {
    ConvSpec spec;
    Parameter<T>* w = nullptr;
    Parameter<T>* b = nullptr;

    Tensor<T> operator()(const Tensor<T>& x, Tape<T>* tape) const;
};

// Weight [out,in,k,k], fan-in-scaled uniform init (bound 1/sqrt(in*k*k));
// bias zero. Registers "<path>.w" and, when spec.bias, "<path>.b".
template <typename T>
Conv2dLayer<T> make_conv2d(ParamStore<T>& store, const std::string& path, ConvSpec spec,
                           std::mt19937_64& rng);

// spec.in_channels/out_channels describe the op's input and output; the
// stored weight is [in,out,k,k] to match the transposed-conv orientation.
template <typename T>
struct ConvTranspose2dLayer {
    ConvSpec spec;
    Parameter<T>* w = nullptr;
    Parameter<T>* b = nullptr;

    Tensor<T> operator()(const Tensor<T>& x, Tape<T>* tape) const;
};

template <typename T>
ConvTranspose2dLayer<T> make_conv_transpose2d(ParamStore<T>& store, const std::string& path,
                                              ConvSpec spec, std::mt19937_64& rng);

template <typename T>
struct LayerNormChanLayer {
    Parameter<T>* gain = nullptr;
    Parameter<T>* offset = nullptr;
    double eps = 1e-5;

    Tensor<T> operator()(const Tensor<T>& x, Tape<T>* tape) const;
};

// gain = 1, offset = 0 over `channels`.
template <typename T>
LayerNormChanLayer<T> make_layer_norm(ParamStore<T>& store, const std::string& path,
                                      int64_t channels);

}  // namespace gridformer
