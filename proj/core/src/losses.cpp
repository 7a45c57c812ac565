#include "gridformer/losses.hpp"

#include <cmath>
#include <random>

#include "gridformer/errors.hpp"

namespace gridformer {

void validate_loss_config(const LossConfig& cfg) {
    if (cfg.epsilon <= 0) throw ConfigError("loss: epsilon must be positive");
    if (cfg.alpha < 0) throw ConfigError("loss: alpha must be non-negative");
    if (cfg.scales < 1) throw ConfigError("loss: scales must be >= 1");
}

template <typename T>
Tensor<T> charbonnier_ms(const std::vector<Tensor<T>>& restored,
                         const std::vector<Tensor<T>>& reference, double eps, bool global_norm) {
    if (restored.empty() || restored.size() != reference.size())
        throw ContractError("charbonnier_ms: pyramid size mismatch");
    Tensor<T> acc;
    for (size_t k = 0; k < restored.size(); ++k) {
        if (restored[k].shape() != reference[k].shape())
            throw ContractError("charbonnier_ms: shape mismatch at scale " + std::to_string(k) +
                                ": " + restored[k].shape().str() + " vs " +
                                reference[k].shape().str());
        Tensor<T> d = sub(restored[k], reference[k]);
        Tensor<T> sq = mul(d, d);
        Tensor<T> term;
        if (global_norm) {
            term = sqrt_ew(add_scalar(sum_all(sq), eps * eps));
        } else {
            term = mean_all(sqrt_ew(add_scalar(sq, eps * eps)));
        }
        acc = k == 0 ? term : add(acc, term);
    }
    return scale(acc, 1.0 / double(restored.size()));
}

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::standard(uint64_t seed) {
    // Widths chosen to stay cheap while reaching a fifth-stage receptive
    // field; stride-2 3x3 convs halve extents at every stage.
    static constexpr int64_t kWidths[] = {3, 8, 16, 24, 32, 32};
    std::mt19937_64 rng(seed);
    FeatureExtractor<T> fe;
    for (int s = 0; s < 5; ++s) {
        const int64_t cin = kWidths[s], cout = kWidths[s + 1];
        const T bound = static_cast<T>(1.0 / std::sqrt(double(cin * 9)));
        fe.weights.push_back(Tensor<T>::uniform(Shape{cout, cin, 3, 3}, rng, -bound, bound));
        fe.biases.push_back(Tensor<T>::uniform(Shape{cout}, rng, T(-0.1), T(0.1)));
    }
    return fe;
}

template <typename T>
Tensor<T> FeatureExtractor<T>::operator()(const Tensor<T>& x, Tape<T>* tape) const {
    (void)tape;  // ops inherit the tape from x; frozen weights join as leaves
    if (x.shape().rank() != 4 || x.shape()[1] != weights[0].shape()[1])
        throw ContractError("feature extractor expects [N," +
                            std::to_string(weights[0].shape()[1]) + ",H,W], got " +
                            x.shape().str());
    Tensor<T> h = x;
    for (size_t s = 0; s < weights.size(); ++s) h = relu(conv2d(h, weights[s], &biases[s], 2, 1));
    return h;
}

template <typename T>
Tensor<T> perceptual(const std::vector<Tensor<T>>& restored,
                     const std::vector<Tensor<T>>& reference, const FeatureExtractor<T>& phi,
                     Tape<T>* tape) {
    if (restored.empty() || restored.size() != reference.size())
        throw ContractError("perceptual: pyramid size mismatch");
    Tensor<T> acc;
    for (size_t k = 0; k < restored.size(); ++k) {
        Tensor<T> d = sub(phi(restored[k], tape), phi(reference[k], tape));
        Tensor<T> term = mean_all(abs_ew(d));
        acc = k == 0 ? term : add(acc, term);
    }
    return scale(acc, 1.0 / double(restored.size()));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& char_loss, const Tensor<T>& per_loss, double alpha) {
    return add(char_loss, scale(per_loss, alpha));
}

namespace {

template <typename T>
void check_same_image(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ContractError("metric: shape mismatch " + a.shape().str() + " vs " +
                            b.shape().str());
    if (a.shape().rank() != 4) throw ContractError("metric: expected [N,C,H,W]");
}

double mse_between(const double* a, const double* b, int64_t n) {
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / double(n);
}

template <typename T>
std::vector<double> as_doubles(const Tensor<T>& t) {
    std::vector<double> v(size_t(t.size()));
    for (int64_t i = 0; i < t.size(); ++i) v[size_t(i)] = double(t[i]);
    return v;
}

}  // namespace

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, PsnrMode mode) {
    check_same_image(a, b);
    double m;
    if (mode == PsnrMode::Y) {
        Tensor<T> ya = rgb_to_y(a), yb = rgb_to_y(b);
        std::vector<double> va = as_doubles(ya), vb = as_doubles(yb);
        m = mse_between(va.data(), vb.data(), int64_t(va.size()));
    } else {
        std::vector<double> va = as_doubles(a), vb = as_doubles(b);
        m = mse_between(va.data(), vb.data(), int64_t(va.size()));
    }
    if (m <= 0) return 99.0;
    return std::min(99.0, -10.0 * std::log10(m));
}

namespace {

constexpr int kWin = 11;

const double* gaussian_window() {
    static double w[kWin * kWin];
    static bool ready = false;
    if (!ready) {
        const double sigma = 1.5;
        double sum = 0;
        for (int y = 0; y < kWin; ++y)
            for (int x = 0; x < kWin; ++x) {
                const double dy = y - kWin / 2, dx = x - kWin / 2;
                w[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
                sum += w[y * kWin + x];
            }
        for (double& v : w) v /= sum;
        ready = true;
    }
    return w;
}

// Valid-mode windowed sum of w .* f over an HxW plane at (y0,x0).
double window_apply(const double* f, int64_t wd, int64_t y0, int64_t x0, const double* win) {
    double acc = 0;
    for (int y = 0; y < kWin; ++y)
        for (int x = 0; x < kWin; ++x) acc += win[y * kWin + x] * f[(y0 + y) * wd + (x0 + x)];
    return acc;
}

double ssim_plane(const double* a, const double* b, int64_t h, int64_t wd) {
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const double* win = gaussian_window();
    std::vector<double> aa(size_t(h * wd)), bb(size_t(h * wd)), ab(size_t(h * wd));
    for (int64_t i = 0; i < h * wd; ++i) {
        aa[size_t(i)] = a[i] * a[i];
        bb[size_t(i)] = b[i] * b[i];
        ab[size_t(i)] = a[i] * b[i];
    }
    double acc = 0;
    int64_t count = 0;
    for (int64_t y = 0; y + kWin <= h; ++y)
        for (int64_t x = 0; x + kWin <= wd; ++x) {
            const double ma = window_apply(a, wd, y, x, win);
            const double mb = window_apply(b, wd, y, x, win);
            const double va = window_apply(aa.data(), wd, y, x, win) - ma * ma;
            const double vb = window_apply(bb.data(), wd, y, x, win) - mb * mb;
            const double vab = window_apply(ab.data(), wd, y, x, win) - ma * mb;
            const double num = (2 * ma * mb + c1) * (2 * vab + c2);
            const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            acc += num / den;
            ++count;
        }
    return acc / double(count);
}

}  // namespace

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_image(a, b);
    const Shape& s = a.shape();
    if (s[2] < kWin || s[3] < kWin)
        throw ContractError("ssim: image " + s.str() + " smaller than the 11x11 window");
    std::vector<double> va = as_doubles(a), vb = as_doubles(b);
    const int64_t plane = s[2] * s[3];
    double acc = 0;
    const int64_t planes = s[0] * s[1];
    for (int64_t p = 0; p < planes; ++p)
        acc += ssim_plane(va.data() + p * plane, vb.data() + p * plane, s[2], s[3]);
    return acc / double(planes);
}

template <typename T>
Tensor<T> rgb_to_y(const Tensor<T>& img) {
    const Shape& s = img.shape();
    if (s.rank() != 4 || s[1] != 3)
        throw ContractError("rgb_to_y: expected [N,3,H,W], got " + s.str());
    Tensor<T> out = Tensor<T>::zeros(Shape{s[0], 1, s[2], s[3]});
    const int64_t plane = s[2] * s[3];
    T* o = out.mut();
    const T* p = img.data();
    for (int64_t n = 0; n < s[0]; ++n) {
        const T* r = p + n * 3 * plane;
        const T* g = r + plane;
        const T* b = g + plane;
        T* dst = o + n * plane;
        for (int64_t i = 0; i < plane; ++i)
            dst[i] = static_cast<T>(0.299) * r[i] + static_cast<T>(0.587) * g[i] +
                     static_cast<T>(0.114) * b[i];
    }
    return out;
}

#define GF_INSTANTIATE_LOSSES(T)                                                              \
    template Tensor<T> charbonnier_ms<T>(const std::vector<Tensor<T>>&,                       \
                                         const std::vector<Tensor<T>>&, double, bool);        \
    template struct FeatureExtractor<T>;                                                      \
    template Tensor<T> perceptual<T>(const std::vector<Tensor<T>>&,                           \
                                     const std::vector<Tensor<T>>&, const FeatureExtractor<T>&, \
                                     Tape<T>*);                                               \
    template Tensor<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&, double);             \
    template double psnr<T>(const Tensor<T>&, const Tensor<T>&, PsnrMode);                    \
    template double ssim<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> rgb_to_y<T>(const Tensor<T>&);

GF_INSTANTIATE_LOSSES(float)
GF_INSTANTIATE_LOSSES(double)

}  // namespace gridformer
