#include "gridformer/nn.hpp"

#include <cmath>

namespace gridformer {

template <typename T>
Parameter<T>& ParamStore<T>::create(const std::string& path, Tensor<T> init) {
    if (by_path_.count(path)) throw ContractError("duplicate parameter path: " + path);
    params_.push_back(std::make_unique<Parameter<T>>(Parameter<T>{path, std::move(init), {}}));
    Parameter<T>* p = params_.back().get();
    by_path_.emplace(path, p);
    return *p;
}

template <typename T>
Parameter<T>* ParamStore<T>::find(const std::string& path) {
    auto it = by_path_.find(path);
    return it == by_path_.end() ? nullptr : it->second;
}

template <typename T>
const Parameter<T>* ParamStore<T>::find(const std::string& path) const {
    auto it = by_path_.find(path);
    return it == by_path_.end() ? nullptr : it->second;
}

template <typename T>
std::vector<Parameter<T>*> ParamStore<T>::list() {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

template <typename T>
std::vector<const Parameter<T>*> ParamStore<T>::list() const {
    std::vector<const Parameter<T>*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
}

template <typename T>
int64_t ParamStore<T>::scalar_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

void validate_conv_spec(const ConvSpec& spec) {
    if (spec.in_channels < 1 || spec.out_channels < 1)
        throw ConfigError("conv spec needs positive channel counts");
    if (spec.kernel < 1) throw ConfigError("conv spec needs kernel >= 1");
    if (spec.stride < 1) throw ConfigError("conv spec needs stride >= 1");
    if (spec.padding < 0) throw ConfigError("conv spec needs padding >= 0");
}

namespace {

template <typename T>
Tensor<T> fan_in_uniform(Shape s, int64_t fan_in, std::mt19937_64& rng) {
    const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
    return Tensor<T>::uniform(s, rng, -bound, bound);
}

}  // namespace

template <typename T>
Tensor<T> Conv2dLayer<T>::operator()(const Tensor<T>& x, Tape<T>* tape) const {
    Tensor<T> wt = bind(*w, tape);
    if (b) {
        Tensor<T> bt = bind(*b, tape);
        return conv2d(x, wt, &bt, spec.stride, spec.padding);
    }
    return conv2d(x, wt, spec.stride, spec.padding);
}

template <typename T>
Conv2dLayer<T> make_conv2d(ParamStore<T>& store, const std::string& path, ConvSpec spec,
                           std::mt19937_64& rng) {
    validate_conv_spec(spec);
    Conv2dLayer<T> layer;
    layer.spec = spec;
    const int64_t fan_in = spec.in_channels * spec.kernel * spec.kernel;
    layer.w = &store.create(
        path + ".w",
        fan_in_uniform<T>(Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel},
                          fan_in, rng));
    if (spec.bias) layer.b = &store.create(path + ".b", Tensor<T>::zeros(Shape{spec.out_channels}));
    return layer;
}

template <typename T>
Tensor<T> ConvTranspose2dLayer<T>::operator()(const Tensor<T>& x, Tape<T>* tape) const {
    Tensor<T> wt = bind(*w, tape);
    if (b) {
        Tensor<T> bt = bind(*b, tape);
        return conv_transpose2d(x, wt, &bt, spec.stride, spec.padding);
    }
    return conv_transpose2d(x, wt, spec.stride, spec.padding);
}

template <typename T>
ConvTranspose2dLayer<T> make_conv_transpose2d(ParamStore<T>& store, const std::string& path,
                                              ConvSpec spec, std::mt19937_64& rng) {
    validate_conv_spec(spec);
    ConvTranspose2dLayer<T> layer;
    layer.spec = spec;
    // With kernel == stride each output position sees exactly in_channels
    // taps; otherwise fall back to the dense fan-in.
    const int64_t fan_in = spec.kernel == spec.stride
                               ? spec.in_channels
                               : spec.in_channels * spec.kernel * spec.kernel;
    layer.w = &store.create(
        path + ".w",
        fan_in_uniform<T>(Shape{spec.in_channels, spec.out_channels, spec.kernel, spec.kernel},
                          fan_in, rng));
    if (spec.bias) layer.b = &store.create(path + ".b", Tensor<T>::zeros(Shape{spec.out_channels}));
    return layer;
}

template <typename T>
Tensor<T> LayerNormChanLayer<T>::operator()(const Tensor<T>& x, Tape<T>* tape) const {
    return layer_norm_chan(x, bind(*gain, tape), bind(*offset, tape), eps);
}

template <typename T>
LayerNormChanLayer<T> make_layer_norm(ParamStore<T>& store, const std::string& path,
                                      int64_t channels) {
    if (channels < 1) throw ConfigError("layer norm needs positive channel count");
    LayerNormChanLayer<T> layer;
    layer.gain = &store.create(path + ".gain", Tensor<T>::full(Shape{channels}, T(1)));
    layer.offset = &store.create(path + ".offset", Tensor<T>::zeros(Shape{channels}));
    return layer;
}

#define GF_INSTANTIATE_NN(T)                                                                     \
    template class ParamStore<T>;                                                                \
    template struct Conv2dLayer<T>;                                                             \
    template Conv2dLayer<T> make_conv2d<T>(ParamStore<T>&, const std::string&, ConvSpec,         \
                                           std::mt19937_64&);                                    \
    template struct ConvTranspose2dLayer<T>;                                                    \
    template ConvTranspose2dLayer<T> make_conv_transpose2d<T>(ParamStore<T>&, const std::string&, \
                                                              ConvSpec, std::mt19937_64&);       \
    template struct LayerNormChanLayer<T>;                                                      \
    template LayerNormChanLayer<T> make_layer_norm<T>(ParamStore<T>&, const std::string&,        \
                                                      int64_t);

GF_INSTANTIATE_NN(float)
GF_INSTANTIATE_NN(double)

#undef GF_INSTANTIATE_NN

}  // namespace gridformer
