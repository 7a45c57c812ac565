#include "gridformer/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gridformer/errors.hpp"

namespace gridformer {

namespace {

namespace fs = std::filesystem;

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

void check_image(const TensorF& img, const char* who) {
    const Shape& s = img.shape();
    if (s.rank() != 4 || s[0] != 1 || s[1] != 3)
        throw ContractError(std::string(who) + ": expected [1,3,H,W], got " + s.str());
}

struct Plane {
    float* p;
    int64_t h, w;
    float& at(int64_t y, int64_t x) { return p[y * w + x]; }
};

// Channel planes of a [1,3,H,W] image.
std::array<Plane, 3> planes(TensorF& img) {
    const Shape& s = img.shape();
    float* p = img.mut();
    const int64_t n = s[2] * s[3];
    return {Plane{p, s[2], s[3]}, Plane{p + n, s[2], s[3]}, Plane{p + 2 * n, s[2], s[3]}};
}

// In-place 3x3 edge-clamped box blur over one plane.
void box_blur_plane(std::vector<float>& v, int64_t h, int64_t w) {
    std::vector<float> tmp(v.size());
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            float acc = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int64_t yy = std::clamp<int64_t>(y + dy, 0, h - 1);
                    const int64_t xx = std::clamp<int64_t>(x + dx, 0, w - 1);
                    acc += v[size_t(yy * w + xx)];
                }
            tmp[size_t(y * w + x)] = acc / 9.0f;
        }
    v.swap(tmp);
}

TensorF blurred_copy(const TensorF& img, int passes) {
    TensorF out = img.clone();
    const Shape& s = out.shape();
    float* p = out.mut();
    const int64_t n = s[2] * s[3];
    for (int c = 0; c < 3; ++c) {
        std::vector<float> v(p + c * n, p + (c + 1) * n);
        for (int i = 0; i < passes; ++i) box_blur_plane(v, s[2], s[3]);
        std::copy(v.begin(), v.end(), p + c * n);
    }
    return out;
}

}  // namespace

uint64_t derive_seed(uint64_t global_seed, const std::string& id) {
    return splitmix64(global_seed ^ splitmix64(fnv1a(id)));
}

void validate_degradation_spec(const DegradationSpec& spec) {
    if (spec.kind != "haze" && spec.kind != "rain" && spec.kind != "snow" &&
        spec.kind != "raindrop" && spec.kind != "mixed")
        throw ConfigError("degradation: unknown kind '" + spec.kind + "'");
    for (double a : spec.airlight)
        if (a < 0.7 || a > 1.0)
            throw ConfigError("degradation: airlight components must lie in [0.7,1.0]");
    if (spec.beta < 0) throw ConfigError("degradation: beta must be >= 0");
    if (spec.depth_style != "noise" && spec.depth_style != "ramp")
        throw ConfigError("degradation: depth_style must be noise or ramp");
    if (spec.streak_count < 0 || spec.flake_count < 0 || spec.drop_count < 0)
        throw ConfigError("degradation: counts must be >= 0");
    if (spec.streak_alpha < 0 || spec.streak_alpha > 1 || spec.flake_alpha < 0 ||
        spec.flake_alpha > 1)
        throw ConfigError("degradation: alphas must lie in [0,1]");
    if (spec.flake_radius_min > spec.flake_radius_max ||
        spec.drop_radius_min > spec.drop_radius_max)
        throw ConfigError("degradation: radius ranges must be ordered");
}

KvList degradation_spec_kv(const DegradationSpec& spec) {
    KvList kv;
    kv.set("kind", spec.kind);
    kv.set_int("seed", int64_t(spec.seed));
    auto set_d = [&kv](const char* k, double v) {
        std::ostringstream ss;
        ss << v;
        kv.set(k, ss.str());
    };
    if (spec.kind == "haze" || spec.kind == "mixed") {
        set_d("airlight_r", spec.airlight[0]);
        set_d("airlight_g", spec.airlight[1]);
        set_d("airlight_b", spec.airlight[2]);
        set_d("beta", spec.beta);
        kv.set("depth_style", spec.depth_style);
    }
    if (spec.kind == "rain" || spec.kind == "mixed") {
        kv.set_int("streak_count", spec.streak_count);
        set_d("streak_length", spec.streak_length);
        set_d("streak_angle_deg", spec.streak_angle_deg);
        set_d("streak_alpha", spec.streak_alpha);
    }
    if (spec.kind == "snow" || spec.kind == "mixed") {
        kv.set_int("flake_count", spec.flake_count);
        set_d("flake_radius_min", spec.flake_radius_min);
        set_d("flake_radius_max", spec.flake_radius_max);
        set_d("flake_alpha", spec.flake_alpha);
    }
    if (spec.kind == "raindrop" || spec.kind == "mixed") {
        kv.set_int("drop_count", spec.drop_count);
        set_d("drop_radius_min", spec.drop_radius_min);
        set_d("drop_radius_max", spec.drop_radius_max);
        set_d("drop_blur", spec.drop_blur);
    }
    return kv;
}

DegradationSpec degradation_spec_from_kv(const KvList& kv) {
    DegradationSpec d;
    DegradationSpec spec;
    spec.kind = kv.get_or("kind", d.kind);
    spec.seed = uint64_t(kv.get_int_or("seed", int64_t(d.seed)));
    spec.airlight[0] = kv.get_double_or("airlight_r", d.airlight[0]);
    spec.airlight[1] = kv.get_double_or("airlight_g", d.airlight[1]);
    spec.airlight[2] = kv.get_double_or("airlight_b", d.airlight[2]);
    spec.beta = kv.get_double_or("beta", d.beta);
    spec.depth_style = kv.get_or("depth_style", d.depth_style);
    spec.streak_count = kv.get_int_or("streak_count", d.streak_count);
    spec.streak_length = kv.get_double_or("streak_length", d.streak_length);
    spec.streak_angle_deg = kv.get_double_or("streak_angle_deg", d.streak_angle_deg);
    spec.streak_alpha = kv.get_double_or("streak_alpha", d.streak_alpha);
    spec.flake_count = kv.get_int_or("flake_count", d.flake_count);
    spec.flake_radius_min = kv.get_double_or("flake_radius_min", d.flake_radius_min);
    spec.flake_radius_max = kv.get_double_or("flake_radius_max", d.flake_radius_max);
    spec.flake_alpha = kv.get_double_or("flake_alpha", d.flake_alpha);
    spec.drop_count = kv.get_int_or("drop_count", d.drop_count);
    spec.drop_radius_min = kv.get_double_or("drop_radius_min", d.drop_radius_min);
    spec.drop_radius_max = kv.get_double_or("drop_radius_max", d.drop_radius_max);
    spec.drop_blur = kv.get_double_or("drop_blur", d.drop_blur);
    validate_degradation_spec(spec);
    return spec;
}

TensorF synth_depth_map(int64_t h, int64_t w, uint64_t seed, const std::string& style) {
    std::vector<float> v(size_t(h * w));
    if (style == "ramp") {
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                v[size_t(y * w + x)] =
                    float(double(x + y) / double(std::max<int64_t>(1, h + w - 2)));
    } else {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<float> u(0.0f, 1.0f);
        for (auto& e : v) e = u(rng);
        for (int i = 0; i < 4; ++i) box_blur_plane(v, h, w);
        const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
        const float lo = *lo_it, span = *hi_it - *lo_it;
        if (span > 0) {
            for (auto& e : v) e = (e - lo) / span;
        } else {
            std::fill(v.begin(), v.end(), 0.5f);
        }
    }
    return TensorF::from(Shape{1, 1, h, w}, std::move(v));
}

TensorF synth_haze(const TensorF& clean, const DegradationSpec& spec) {
    check_image(clean, "synth_haze");
    const Shape& s = clean.shape();
    TensorF depth = synth_depth_map(s[2], s[3], splitmix64(spec.seed), spec.depth_style);
    TensorF out = clean.clone();
    auto pl = planes(out);
    const float* d = depth.data();
    const int64_t n = s[2] * s[3];
    for (int c = 0; c < 3; ++c) {
        const float a = float(spec.airlight[c]);
        for (int64_t i = 0; i < n; ++i) {
            const float t = std::exp(float(-spec.beta) * d[i]);
            pl[size_t(c)].p[i] = clamp01(pl[size_t(c)].p[i] * t + a * (1.0f - t));
        }
    }
    return out;
}

TensorF synth_rain(const TensorF& clean, const DegradationSpec& spec) {
    check_image(clean, "synth_rain");
    TensorF out = clean.clone();
    if (spec.streak_count == 0) return out;
    const Shape& s = clean.shape();
    auto pl = planes(out);
    std::mt19937_64 rng(splitmix64(spec.seed ^ 0x5261696eull));
    std::uniform_real_distribution<double> uy(0, double(s[2] - 1)), ux(0, double(s[3] - 1));
    std::uniform_real_distribution<double> jitter(-5.0, 5.0), bright(0.85, 1.0);
    for (int64_t k = 0; k < spec.streak_count; ++k) {
        const double cy = uy(rng), cx = ux(rng);
        const double ang = (spec.streak_angle_deg + jitter(rng)) * 3.14159265358979323846 / 180.0;
        const float color = float(bright(rng));
        const float a = float(spec.streak_alpha);
        const double dy = std::sin(ang), dx = std::cos(ang);
        const int64_t half = int64_t(spec.streak_length / 2);
        for (int64_t t = -half; t <= half; ++t) {
            const int64_t y = int64_t(std::lround(cy + dy * double(t)));
            const int64_t x = int64_t(std::lround(cx + dx * double(t)));
            if (y < 0 || y >= s[2] || x < 0 || x >= s[3]) continue;
            for (int c = 0; c < 3; ++c) {
                float& p = pl[size_t(c)].at(y, x);
                p = clamp01((1.0f - a) * p + a * color);
            }
        }
    }
    return out;
}

TensorF synth_snow(const TensorF& clean, const DegradationSpec& spec) {
    check_image(clean, "synth_snow");
    TensorF out = clean.clone();
    if (spec.flake_count == 0) return out;
    const Shape& s = clean.shape();
    auto pl = planes(out);
    std::mt19937_64 rng(splitmix64(spec.seed ^ 0x536e6f77ull));
    std::uniform_real_distribution<double> uy(0, double(s[2] - 1)), ux(0, double(s[3] - 1));
    std::uniform_real_distribution<double> ur(spec.flake_radius_min, spec.flake_radius_max);
    for (int64_t k = 0; k < spec.flake_count; ++k) {
        const double cy = uy(rng), cx = ux(rng), r = ur(rng);
        const int64_t y0 = std::max<int64_t>(0, int64_t(cy - r - 1));
        const int64_t y1 = std::min<int64_t>(s[2] - 1, int64_t(cy + r + 1));
        const int64_t x0 = std::max<int64_t>(0, int64_t(cx - r - 1));
        const int64_t x1 = std::min<int64_t>(s[3] - 1, int64_t(cx + r + 1));
        for (int64_t y = y0; y <= y1; ++y)
            for (int64_t x = x0; x <= x1; ++x) {
                const double dist = std::hypot(double(y) - cy, double(x) - cx);
                const float a = float(spec.flake_alpha * std::max(0.0, 1.0 - dist / r));
                if (a <= 0) continue;
                for (int c = 0; c < 3; ++c) {
                    float& p = pl[size_t(c)].at(y, x);
                    p = clamp01((1.0f - a) * p + a * 1.0f);
                }
            }
    }
    return out;
}

TensorF synth_raindrop(const TensorF& clean, const DegradationSpec& spec) {
    check_image(clean, "synth_raindrop");
    TensorF out = clean.clone();
    if (spec.drop_count == 0) return out;
    const Shape& s = clean.shape();
    const int passes = std::max(1, int(std::lround(spec.drop_blur)));
    TensorF blur = blurred_copy(clean, passes);
    auto pl = planes(out);
    auto bl = planes(blur);
    std::mt19937_64 rng(splitmix64(spec.seed ^ 0x44726f70ull));
    std::uniform_real_distribution<double> uy(0, double(s[2] - 1)), ux(0, double(s[3] - 1));
    std::uniform_real_distribution<double> ur(spec.drop_radius_min, spec.drop_radius_max);
    for (int64_t k = 0; k < spec.drop_count; ++k) {
        const double cy = uy(rng), cx = ux(rng), r = ur(rng);
        const int64_t y0 = std::max<int64_t>(0, int64_t(cy - r));
        const int64_t y1 = std::min<int64_t>(s[2] - 1, int64_t(cy + r));
        const int64_t x0 = std::max<int64_t>(0, int64_t(cx - r));
        const int64_t x1 = std::min<int64_t>(s[3] - 1, int64_t(cx + r));
        for (int64_t y = y0; y <= y1; ++y)
            for (int64_t x = x0; x <= x1; ++x) {
                if (std::hypot(double(y) - cy, double(x) - cx) > r) continue;
                for (int c = 0; c < 3; ++c) pl[size_t(c)].at(y, x) = bl[size_t(c)].at(y, x);
            }
    }
    return out;
}

TensorF degrade(const TensorF& clean, const DegradationSpec& spec) {
    validate_degradation_spec(spec);
    if (spec.kind == "haze") return synth_haze(clean, spec);
    if (spec.kind == "rain") return synth_rain(clean, spec);
    if (spec.kind == "snow") return synth_snow(clean, spec);
    if (spec.kind == "raindrop") return synth_raindrop(clean, spec);
    DegradationSpec sub = spec;
    TensorF out = clean;
    sub.seed = splitmix64(spec.seed ^ 1);
    out = synth_haze(out, sub);
    sub.seed = splitmix64(spec.seed ^ 2);
    out = synth_rain(out, sub);
    sub.seed = splitmix64(spec.seed ^ 3);
    out = synth_snow(out, sub);
    sub.seed = splitmix64(spec.seed ^ 4);
    out = synth_raindrop(out, sub);
    return out;
}

TensorF synth_clean_image(int64_t h, int64_t w, uint64_t seed) {
    TensorF out = TensorF::zeros(Shape{1, 3, h, w});
    auto pl = planes(out);
    for (int c = 0; c < 3; ++c) {
        TensorF field = synth_depth_map(h, w, splitmix64(seed ^ uint64_t(0x10 + c)), "noise");
        const float* f = field.data();
        for (int64_t i = 0; i < h * w; ++i) pl[size_t(c)].p[i] = 0.1f + 0.8f * f[i];
    }
    std::mt19937_64 rng(splitmix64(seed ^ 0x5368617065ull));
    std::uniform_real_distribution<double> uy(0, double(h - 1)), ux(0, double(w - 1));
    std::uniform_real_distribution<float> uc(0.05f, 0.95f);
    std::uniform_real_distribution<double> us(double(std::min(h, w)) / 8.0,
                                              double(std::min(h, w)) / 3.0);
    for (int k = 0; k < 3; ++k) {  // rectangles
        const int64_t y0 = int64_t(uy(rng)), x0 = int64_t(ux(rng));
        const int64_t hh = int64_t(us(rng)), ww = int64_t(us(rng));
        const float col[3] = {uc(rng), uc(rng), uc(rng)};
        for (int64_t y = y0; y < std::min(h, y0 + hh); ++y)
            for (int64_t x = x0; x < std::min(w, x0 + ww); ++x)
                for (int c = 0; c < 3; ++c)
                    pl[size_t(c)].at(y, x) = 0.2f * pl[size_t(c)].at(y, x) + 0.8f * col[c];
    }
    for (int k = 0; k < 3; ++k) {  // disks
        const double cy = uy(rng), cx = ux(rng), r = us(rng) / 2.0;
        const float col[3] = {uc(rng), uc(rng), uc(rng)};
        const int64_t y0 = std::max<int64_t>(0, int64_t(cy - r)),
                      y1 = std::min<int64_t>(h - 1, int64_t(cy + r));
        const int64_t x0 = std::max<int64_t>(0, int64_t(cx - r)),
                      x1 = std::min<int64_t>(w - 1, int64_t(cx + r));
        for (int64_t y = y0; y <= y1; ++y)
            for (int64_t x = x0; x <= x1; ++x) {
                if (std::hypot(double(y) - cy, double(x) - cx) > r) continue;
                for (int c = 0; c < 3; ++c)
                    pl[size_t(c)].at(y, x) = 0.2f * pl[size_t(c)].at(y, x) + 0.8f * col[c];
            }
    }
    float* p = out.mut();
    for (int64_t i = 0; i < out.size(); ++i) p[i] = clamp01(p[i]);
    return out;
}

template <typename T>
std::vector<Tensor<T>> make_pyramid(const Tensor<T>& img, int64_t levels) {
    const Shape& s = img.shape();
    if (s.rank() != 4) throw ShapeError("make_pyramid: expected [N,C,H,W], got " + s.str());
    if (levels < 1) throw ShapeError("make_pyramid: levels must be >= 1");
    const int64_t div = int64_t(1) << (levels - 1);
    if (s[2] % div != 0 || s[3] % div != 0)
        throw ShapeError("make_pyramid: extents " + s.str() + " not divisible by " +
                         std::to_string(div));
    std::vector<Tensor<T>> out{img};
    for (int64_t l = 1; l < levels; ++l) {
        const Tensor<T>& prev = out.back();
        const Shape& ps = prev.shape();
        Tensor<T> next = Tensor<T>::zeros(Shape{ps[0], ps[1], ps[2] / 2, ps[3] / 2});
        const T* src = prev.data();
        T* dst = next.mut();
        const int64_t oh = ps[2] / 2, ow = ps[3] / 2;
        for (int64_t nc = 0; nc < ps[0] * ps[1]; ++nc) {
            const T* sp = src + nc * ps[2] * ps[3];
            T* dp = dst + nc * oh * ow;
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t x = 0; x < ow; ++x)
                    dp[y * ow + x] =
                        (sp[(2 * y) * ps[3] + 2 * x] + sp[(2 * y) * ps[3] + 2 * x + 1] +
                         sp[(2 * y + 1) * ps[3] + 2 * x] + sp[(2 * y + 1) * ps[3] + 2 * x + 1]) /
                        T(4);
        }
        out.push_back(std::move(next));
    }
    return out;
}

namespace {

TensorF flip_axis(const TensorF& img, bool horizontal) {
    check_image(img, "flip");
    const Shape& s = img.shape();
    TensorF out = TensorF::zeros(s);
    const float* src = img.data();
    float* dst = out.mut();
    const int64_t h = s[2], w = s[3];
    for (int64_t c = 0; c < 3; ++c) {
        const float* sp = src + c * h * w;
        float* dp = dst + c * h * w;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                dp[y * w + x] = horizontal ? sp[y * w + (w - 1 - x)] : sp[(h - 1 - y) * w + x];
    }
    return out;
}

}  // namespace

TensorF flip_horizontal(const TensorF& img) { return flip_axis(img, true); }
TensorF flip_vertical(const TensorF& img) { return flip_axis(img, false); }

namespace {

TensorF crop_image(const TensorF& img, int64_t y0, int64_t x0, int64_t extent) {
    const Shape& s = img.shape();
    TensorF out = TensorF::zeros(Shape{1, 3, extent, extent});
    const float* src = img.data();
    float* dst = out.mut();
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < extent; ++y)
            for (int64_t x = 0; x < extent; ++x)
                dst[(c * extent + y) * extent + x] =
                    src[(c * s[2] + y0 + y) * s[3] + x0 + x];
    return out;
}

}  // namespace

PairSample augment(const PairSample& pair, uint64_t seed, int64_t patch, bool use_flips) {
    check_image(pair.degraded, "augment");
    check_image(pair.clean, "augment");
    if (pair.degraded.shape() != pair.clean.shape())
        throw ContractError("augment: pair images must share extents");
    const Shape& s = pair.degraded.shape();
    if (patch < 1 || patch > s[2] || patch > s[3])
        throw ContractError("augment: patch " + std::to_string(patch) +
                            " exceeds image extents " + s.str());
    std::mt19937_64 rng(splitmix64(seed));
    std::uniform_int_distribution<int64_t> dy(0, s[2] - patch), dx(0, s[3] - patch);
    const int64_t y0 = dy(rng), x0 = dx(rng);
    PairSample out;
    out.id = pair.id;
    out.degraded = crop_image(pair.degraded, y0, x0, patch);
    out.clean = crop_image(pair.clean, y0, x0, patch);
    if (use_flips) {
        std::bernoulli_distribution coin(0.5);
        if (coin(rng)) {
            out.degraded = flip_horizontal(out.degraded);
            out.clean = flip_horizontal(out.clean);
        }
        if (coin(rng)) {
            out.degraded = flip_vertical(out.degraded);
            out.clean = flip_vertical(out.clean);
        }
    }
    return out;
}

void save_image(const std::string& path, const TensorF& img) {
    check_image(img, "save_image");
    const Shape& s = img.shape();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P6\n" << s[3] << " " << s[2] << "\n255\n";
    const float* p = img.data();
    const int64_t plane = s[2] * s[3];
    std::vector<unsigned char> row(size_t(s[3]) * 3);
    for (int64_t y = 0; y < s[2]; ++y) {
        for (int64_t x = 0; x < s[3]; ++x)
            for (int c = 0; c < 3; ++c)
                row[size_t(x * 3 + c)] = static_cast<unsigned char>(
                    std::floor(clamp01(p[c * plane + y * s[3] + x]) * 255.0f + 0.5f));
        os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    if (!os) throw IoError("write failed: " + path);
}

namespace {

int pnm_token(std::istream& is, const std::string& path) {
    // Skips whitespace and '#' comments, then reads one decimal token.
    int c = is.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = is.get();
        c = is.get();
    }
    int v = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        any = true;
        c = is.get();
    }
    if (!any) throw IoError(path + ": malformed PPM header");
    return v;
}

}  // namespace

TensorF load_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open image: " + path);
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '6') throw IoError(path + ": not a binary PPM (P6) file");
    const int w = pnm_token(is, path);
    const int h = pnm_token(is, path);
    const int maxval = pnm_token(is, path);
    if (w < 1 || h < 1 || maxval != 255)
        throw IoError(path + ": unsupported PPM geometry or depth");
    std::vector<unsigned char> raw(size_t(w) * size_t(h) * 3);
    is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (!is) throw IoError(path + ": truncated pixel data");
    TensorF out = TensorF::zeros(Shape{1, 3, h, w});
    float* p = out.mut();
    const int64_t plane = int64_t(h) * w;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                p[c * plane + y * w + x] = float(raw[size_t((y * w + x) * 3 + c)]) / 255.0f;
    return out;
}

namespace {

DegradationSpec dataset_image_spec(const SynthDatasetConfig& cfg, const std::string& id,
                                   uint64_t img_seed) {
    (void)id;
    DegradationSpec spec;
    spec.kind = cfg.kind;
    spec.seed = splitmix64(img_seed ^ 0xdeadbeefull);
    std::mt19937_64 rng(splitmix64(img_seed ^ 0x9a7ab1e5ull));
    std::uniform_real_distribution<double> ubeta(1.2, 2.5), ua(0.75, 0.95);
    spec.beta = ubeta(rng);
    const double a = ua(rng);
    spec.airlight[0] = a;
    spec.airlight[1] = std::min(1.0, a + 0.02);
    spec.airlight[2] = std::min(1.0, a + 0.04);
    return spec;
}

void write_split(const std::string& dir, const SynthDatasetConfig& cfg, const std::string& split,
                 int64_t count) {
    fs::create_directories(dir + "/clean");
    fs::create_directories(dir + "/degraded");
    std::ofstream manifest(dir + "/manifest.txt");
    if (!manifest) throw IoError("cannot open for writing: " + dir + "/manifest.txt");
    for (int64_t i = 0; i < count; ++i) {
        std::ostringstream idss;
        idss << cfg.kind << "_" << split << "_";
        idss.width(3);
        idss.fill('0');
        idss << i;
        const std::string id = idss.str();
        const uint64_t img_seed = derive_seed(cfg.seed, id);
        TensorF clean = synth_clean_image(cfg.extent, cfg.extent, img_seed);
        const DegradationSpec spec = dataset_image_spec(cfg, id, img_seed);
        TensorF deg = degrade(clean, spec);
        save_image(dir + "/clean/" + id + ".ppm", clean);
        save_image(dir + "/degraded/" + id + ".ppm", deg);
        manifest << id;
        for (const auto& [k, v] : degradation_spec_kv(spec).items) manifest << " " << k << "=" << v;
        manifest << "\n";
    }
    if (!manifest) throw IoError("write failed: " + dir + "/manifest.txt");
}

}  // namespace

void write_dataset(const std::string& dir, const SynthDatasetConfig& cfg) {
    if (cfg.train_count < 1 || cfg.test_count < 0 || cfg.extent < 4)
        throw ConfigError("dataset: need train_count >= 1, test_count >= 0, extent >= 4");
    DegradationSpec probe;
    probe.kind = cfg.kind;
    validate_degradation_spec(probe);
    write_split(dir + "/train", cfg, "train", cfg.train_count);
    write_split(dir + "/test", cfg, "test", cfg.test_count);
}

std::vector<PairSample> load_dataset_dir(const std::string& dir) {
    std::ifstream manifest(dir + "/manifest.txt");
    if (!manifest) throw IoError("cannot open manifest: " + dir + "/manifest.txt");
    std::vector<PairSample> out;
    std::string line;
    while (std::getline(manifest, line)) {
        std::istringstream ss(line);
        std::string id;
        if (!(ss >> id)) continue;
        PairSample p;
        p.id = id;
        p.clean = load_image(dir + "/clean/" + id + ".ppm");
        p.degraded = load_image(dir + "/degraded/" + id + ".ppm");
        out.push_back(std::move(p));
    }
    if (out.empty()) throw IoError("manifest lists no samples: " + dir + "/manifest.txt");
    return out;
}

template std::vector<Tensor<float>> make_pyramid<float>(const Tensor<float>&, int64_t);
template std::vector<Tensor<double>> make_pyramid<double>(const Tensor<double>&, int64_t);

}  // namespace gridformer
