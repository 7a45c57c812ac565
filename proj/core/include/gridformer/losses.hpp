#pragma once

#include <vector>

#include "gridformer/ops.hpp"

namespace gridformer {

struct LossConfig {
    double epsilon = 1e-3;
    double alpha = 0.1;
    int64_t scales = 3;
    bool global_norm = false;  // whole-image Charbonnier instead of per-pixel
};

void validate_loss_config(const LossConfig& cfg);

// L = (1/K) sum_k mean(sqrt((Xhat_k - I_k)^2 + eps^2)); the global-norm
// variant uses sqrt(sum((Xhat_k - I_k)^2) + eps^2) per scale.
template <typename T>
Tensor<T> charbonnier_ms(const std::vector<Tensor<T>>& restored,
                         const std::vector<Tensor<T>>& reference, double eps,
                         bool global_norm = false);

// Frozen five-stage stride-2 conv+relu feature stack with seeded weights.
// Weights are plain tensors: gradients flow to the input, never to them.
template <typename T>
struct FeatureExtractor {
    std::vector<Tensor<T>> weights;  // [out,in,3,3]
    std::vector<Tensor<T>> biases;

    static FeatureExtractor standard(uint64_t seed = 0x9e3779b97f4a7c15ull);
    Tensor<T> operator()(const Tensor<T>& x, Tape<T>* tape) const;
};

// (1/K) sum_k mean(|phi(Xhat_k) - phi(I_k)|)
template <typename T>
Tensor<T> perceptual(const std::vector<Tensor<T>>& restored,
                     const std::vector<Tensor<T>>& reference, const FeatureExtractor<T>& phi,
                     Tape<T>* tape);

template <typename T>
Tensor<T> total_loss(const Tensor<T>& char_loss, const Tensor<T>& per_loss, double alpha);

enum class PsnrMode { Rgb, Y };

// -10 log10(MSE) over [0,1] images, capped at 99 dB for zero MSE.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, PsnrMode mode = PsnrMode::Rgb);

// Mean local SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03, L=1,
// averaged over channels. Throws ContractError when extents < 11.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b);

// BT.601 luma: 0.299 R + 0.587 G + 0.114 B. [N,3,H,W] -> [N,1,H,W].
template <typename T>
Tensor<T> rgb_to_y(const Tensor<T>& img);

}  // namespace gridformer
