#include "gridformer/ops.hpp"

#include <algorithm>
#include <cmath>

#include "forward.hpp"
#include "kernels.hpp"

namespace gridformer {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

Shape shape_from_attrs(const OpAttrs& a) {
    std::vector<int64_t> d;
    for (int64_t v : {a.i0, a.i1, a.i2, a.i3})
        if (v > 0) d.push_back(v);
    switch (d.size()) {
        case 1: return Shape{d[0]};
        case 2: return Shape{d[0], d[1]};
        case 3: return Shape{d[0], d[1], d[2]};
        case 4: return Shape{d[0], d[1], d[2], d[3]};
        default: throw ShapeError("reshape target has no extents");
    }
}

OpAttrs attrs_from_shape(const Shape& s) {
    OpAttrs a;
    int64_t* slot[4] = {&a.i0, &a.i1, &a.i2, &a.i3};
    for (int i = 0; i < s.rank(); ++i) *slot[i] = s[i];
    return a;
}

template <typename T>
Tape<T>* pick_tape(const std::vector<const Tensor<T>*>& ps) {
    Tape<T>* tape = nullptr;
    for (auto* p : ps) {
        if (!p->on_tape()) continue;
        if (tape && tape != p->tape()) throw ContractError("operands recorded on different tapes");
        tape = p->tape();
    }
    return tape;
}

// Compute, then record when any operand is taped.
template <typename T>
Tensor<T> run(OpKind kind, OpAttrs attrs, std::vector<const Tensor<T>*> ps) {
    Tensor<T> out = detail::forward_compute<T>(kind, attrs, ps);
    if (Tape<T>* tp = pick_tape(ps)) {
        std::vector<int> ids;
        ids.reserve(ps.size());
        for (auto* p : ps) ids.push_back(enlist(*tp, *p));
        tp->record(kind, std::move(ids), attrs, out);
    }
    return out;
}

template <typename T, typename F>
Tensor<T> map_unary(const Tensor<T>& a, F f) {
    std::vector<T> v(a.vec());
    for (auto& x : v) x = f(x);
    return Tensor<T>::from(a.shape(), std::move(v));
}

}  // namespace

namespace detail {

template <typename T>
Tensor<T> forward_compute(OpKind kind, const OpAttrs& attrs,
                          const std::vector<const Tensor<T>*>& ps) {
    using kernels::conv_out_extent;
    switch (kind) {
        case OpKind::Leaf:
            throw ContractError("leaf nodes are not recomputed");
        case OpKind::Add:
        case OpKind::Sub:
        case OpKind::Mul: {
            const Tensor<T>&a = *ps[0], &b = *ps[1];
            std::vector<T> v(a.vec());
            const T* bp = b.data();
            if (kind == OpKind::Add)
                for (int64_t i = 0; i < a.size(); ++i) v[i] += bp[i];
            else if (kind == OpKind::Sub)
                for (int64_t i = 0; i < a.size(); ++i) v[i] -= bp[i];
            else
                for (int64_t i = 0; i < a.size(); ++i) v[i] *= bp[i];
            return Tensor<T>::from(a.shape(), std::move(v));
        }
        case OpKind::Relu:
            return map_unary(*ps[0], [](T x) { return x > T(0) ? x : T(0); });
        case OpKind::Sqrt:
            return map_unary(*ps[0], [](T x) { return std::sqrt(x); });
        case OpKind::Abs:
            return map_unary(*ps[0], [](T x) { return std::abs(x); });
        case OpKind::Scale: {
            const T s = static_cast<T>(attrs.s0);
            return map_unary(*ps[0], [s](T x) { return x * s; });
        }
        case OpKind::AddScalar: {
            const T s = static_cast<T>(attrs.s0);
            return map_unary(*ps[0], [s](T x) { return x + s; });
        }
        case OpKind::MeanAll:
        case OpKind::SumAll: {
            const Tensor<T>& a = *ps[0];
            T acc = T(0);
            for (int64_t i = 0; i < a.size(); ++i) acc += a[i];
            if (kind == OpKind::MeanAll) acc /= static_cast<T>(a.size());
            return Tensor<T>::scalar(acc);
        }
        case OpKind::Matmul: {
            const Tensor<T>&a = *ps[0], &b = *ps[1];
            const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
            Tensor<T> out = Tensor<T>::zeros(Shape{m, n});
            kernels::gemm_nn(a.data(), b.data(), out.mut(), m, k, n);
            return out;
        }
        case OpKind::Bmm: {
            const Tensor<T>&a = *ps[0], &b = *ps[1];
            const int64_t bs = a.shape()[0], m = a.shape()[1], k = a.shape()[2], n = b.shape()[2];
            Tensor<T> out = Tensor<T>::zeros(Shape{bs, m, n});
            for (int64_t i = 0; i < bs; ++i)
                kernels::gemm_nn(a.data() + i * m * k, b.data() + i * k * n, out.mut() + i * m * n,
                                 m, k, n);
            return out;
        }
        case OpKind::TransposeLast2: {
            const Tensor<T>& a = *ps[0];
            const bool batched = a.shape().rank() == 3;
            const int64_t bs = batched ? a.shape()[0] : 1;
            const int64_t m = a.shape()[batched ? 1 : 0], n = a.shape()[batched ? 2 : 1];
            Tensor<T> out = batched ? Tensor<T>::zeros(Shape{bs, n, m})
                                    : Tensor<T>::zeros(Shape{n, m});
            for (int64_t b = 0; b < bs; ++b) {
                const T* src = a.data() + b * m * n;
                T* dst = out.mut() + b * m * n;
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
            }
            return out;
        }
        case OpKind::SoftmaxLast: {
            const Tensor<T>& a = *ps[0];
            const int64_t n = a.shape()[a.shape().rank() - 1];
            Tensor<T> out = Tensor<T>::zeros(a.shape());
            kernels::softmax_rows(a.data(), out.mut(), a.size() / n, n);
            return out;
        }
        case OpKind::Reshape:
            return Tensor<T>::from(shape_from_attrs(attrs), std::vector<T>(ps[0]->vec()));
        case OpKind::ConcatCh: {
            const Shape& s0 = ps[0]->shape();
            int64_t ctot = 0;
            for (auto* p : ps) ctot += p->shape()[1];
            Tensor<T> out = Tensor<T>::zeros(Shape{s0[0], ctot, s0[2], s0[3]});
            const int64_t plane = s0[2] * s0[3];
            for (int64_t img = 0; img < s0[0]; ++img) {
                int64_t co = 0;
                for (auto* p : ps) {
                    const int64_t c = p->shape()[1];
                    std::copy_n(p->data() + img * c * plane, c * plane,
                                out.mut() + (img * ctot + co) * plane);
                    co += c;
                }
            }
            return out;
        }
        case OpKind::SliceCh: {
            const Tensor<T>& x = *ps[0];
            const Shape& s = x.shape();
            const int64_t start = attrs.i0, count = attrs.i1, plane = s[2] * s[3];
            Tensor<T> out = Tensor<T>::zeros(Shape{s[0], count, s[2], s[3]});
            for (int64_t img = 0; img < s[0]; ++img)
                std::copy_n(x.data() + (img * s[1] + start) * plane, count * plane,
                            out.mut() + img * count * plane);
            return out;
        }
        case OpKind::Conv2d: {
            const Tensor<T>&x = *ps[0], &w = *ps[1];
            const T* bias = ps.size() > 2 ? ps[2]->data() : nullptr;
            const Shape &xs = x.shape(), &ws = w.shape();
            const int64_t k = ws[2], stride = attrs.i0, pad = attrs.i1;
            const int64_t ho = conv_out_extent(xs[2], k, stride, pad);
            const int64_t wo = conv_out_extent(xs[3], k, stride, pad);
            Tensor<T> out = Tensor<T>::zeros(Shape{xs[0], ws[0], ho, wo});
            std::vector<T> scratch;
            kernels::conv2d_forward(x.data(), w.data(), bias, out.mut(), xs[0], xs[1], xs[2],
                                    xs[3], ws[0], k, stride, pad, scratch);
            return out;
        }
        case OpKind::ConvT2d: {
            const Tensor<T>&x = *ps[0], &w = *ps[1];
            const Shape &xs = x.shape(), &ws = w.shape();
            const int64_t k = ws[2], stride = attrs.i0, pad = attrs.i1;
            const int64_t ho = (xs[2] - 1) * stride + k - 2 * pad;
            const int64_t wo = (xs[3] - 1) * stride + k - 2 * pad;
            Tensor<T> out = Tensor<T>::zeros(Shape{xs[0], ws[1], ho, wo});
            std::vector<T> scratch;
            kernels::conv2d_backward_data(x.data(), w.data(), out.mut(), xs[0], ws[1], ho, wo,
                                          ws[0], k, stride, pad, scratch);
            if (ps.size() > 2) {
                const T* bias = ps[2]->data();
                const int64_t plane = ho * wo;
                for (int64_t img = 0; img < xs[0]; ++img)
                    for (int64_t c = 0; c < ws[1]; ++c) {
                        T* dst = out.mut() + (img * ws[1] + c) * plane;
                        for (int64_t p = 0; p < plane; ++p) dst[p] += bias[c];
                    }
            }
            return out;
        }
        case OpKind::AvgPool: {
            const Tensor<T>& x = *ps[0];
            const Shape& s = x.shape();
            const int64_t r = attrs.i0, ho = s[2] / r, wo = s[3] / r;
            Tensor<T> out = Tensor<T>::zeros(Shape{s[0], s[1], ho, wo});
            const T inv = T(1) / static_cast<T>(r * r);
            T* dst = out.mut();
            for (int64_t img = 0; img < s[0]; ++img)
                for (int64_t c = 0; c < s[1]; ++c) {
                    const T* xc = x.data() + (img * s[1] + c) * s[2] * s[3];
                    for (int64_t y = 0; y < ho; ++y)
                        for (int64_t xx = 0; xx < wo; ++xx) {
                            T acc = T(0);
                            for (int64_t dy = 0; dy < r; ++dy)
                                for (int64_t dx = 0; dx < r; ++dx)
                                    acc += xc[(y * r + dy) * s[3] + xx * r + dx];
                            *dst++ = acc * inv;
                        }
                }
            return out;
        }
        case OpKind::UpsampleNearest: {
            const Tensor<T>& x = *ps[0];
            const Shape& s = x.shape();
            const int64_t r = attrs.i0, ho = s[2] * r, wo = s[3] * r;
            Tensor<T> out = Tensor<T>::zeros(Shape{s[0], s[1], ho, wo});
            T* dst = out.mut();
            for (int64_t img = 0; img < s[0]; ++img)
                for (int64_t c = 0; c < s[1]; ++c) {
                    const T* xc = x.data() + (img * s[1] + c) * s[2] * s[3];
                    for (int64_t y = 0; y < ho; ++y) {
                        const T* row = xc + (y / r) * s[3];
                        for (int64_t xx = 0; xx < wo; ++xx) *dst++ = row[xx / r];
                    }
                }
            return out;
        }
        case OpKind::PixelUnshuffle: {
            const Tensor<T>& x = *ps[0];
            const Shape& s = x.shape();
            const int64_t r = attrs.i0, co = s[1] * r * r, ho = s[2] / r, wo = s[3] / r;
            Tensor<T> out = Tensor<T>::zeros(Shape{s[0], co, ho, wo});
            T* o = out.mut();
            for (int64_t img = 0; img < s[0]; ++img)
                for (int64_t c = 0; c < s[1]; ++c)
                    for (int64_t dy = 0; dy < r; ++dy)
                        for (int64_t dx = 0; dx < r; ++dx) {
                            const int64_t oc = (c * r + dy) * r + dx;
                            for (int64_t y = 0; y < ho; ++y)
                                for (int64_t xx = 0; xx < wo; ++xx)
                                    o[((img * co + oc) * ho + y) * wo + xx] =
                                        x.at4(img, c, y * r + dy, xx * r + dx);
                        }
            return out;
        }
        case OpKind::PixelShuffle: {
            const Tensor<T>& x = *ps[0];
            const Shape& s = x.shape();
            const int64_t r = attrs.i0, co = s[1] / (r * r), ho = s[2] * r, wo = s[3] * r;
            Tensor<T> out = Tensor<T>::zeros(Shape{s[0], co, ho, wo});
            T* o = out.mut();
            for (int64_t img = 0; img < s[0]; ++img)
                for (int64_t oc = 0; oc < co; ++oc)
                    for (int64_t y = 0; y < ho; ++y)
                        for (int64_t xx = 0; xx < wo; ++xx) {
                            const int64_t ic = (oc * r + y % r) * r + xx % r;
                            o[((img * co + oc) * ho + y) * wo + xx] =
                                x.at4(img, ic, y / r, xx / r);
                        }
            return out;
        }
        case OpKind::LayerNormCh: {
            const Tensor<T>&x = *ps[0], &gain = *ps[1], &offset = *ps[2];
            const Shape& s = x.shape();
            Tensor<T> out = Tensor<T>::zeros(s);
            kernels::layer_norm_chan_forward(x.data(), gain.data(), offset.data(), out.mut(),
                                             s[0], s[1], s[2], s[3], attrs.s0);
            return out;
        }
        case OpKind::ChannelScale: {
            const Tensor<T>&x = *ps[0], &w = *ps[1];
            const Shape& s = x.shape();
            const int64_t plane = s[2] * s[3];
            std::vector<T> v(x.vec());
            for (int64_t img = 0; img < s[0]; ++img)
                for (int64_t c = 0; c < s[1]; ++c) {
                    T* row = v.data() + (img * s[1] + c) * plane;
                    const T wc = w[c];
                    for (int64_t p = 0; p < plane; ++p) row[p] *= wc;
                }
            return Tensor<T>::from(s, std::move(v));
        }
        case OpKind::PadReflect: {
            const Tensor<T>& x = *ps[0];
            const Shape& s = x.shape();
            const int64_t ph = attrs.i0, pw = attrs.i1, ho = s[2] + ph, wo = s[3] + pw;
            Tensor<T> out = Tensor<T>::zeros(Shape{s[0], s[1], ho, wo});
            T* o = out.mut();
            for (int64_t img = 0; img < s[0]; ++img)
                for (int64_t c = 0; c < s[1]; ++c)
                    for (int64_t y = 0; y < ho; ++y) {
                        const int64_t sy = y < s[2] ? y : 2 * s[2] - 2 - y;
                        for (int64_t xx = 0; xx < wo; ++xx) {
                            const int64_t sx = xx < s[3] ? xx : 2 * s[3] - 2 - xx;
                            o[((img * s[1] + c) * ho + y) * wo + xx] = x.at4(img, c, sy, sx);
                        }
                    }
            return out;
        }
        case OpKind::CropSpatial: {
            const Tensor<T>& x = *ps[0];
            const Shape& s = x.shape();
            const int64_t y0 = attrs.i0, x0 = attrs.i1, h = attrs.i2, w = attrs.i3;
            Tensor<T> out = Tensor<T>::zeros(Shape{s[0], s[1], h, w});
            T* o = out.mut();
            for (int64_t img = 0; img < s[0]; ++img)
                for (int64_t c = 0; c < s[1]; ++c)
                    for (int64_t y = 0; y < h; ++y)
                        for (int64_t xx = 0; xx < w; ++xx)
                            *o++ = x.at4(img, c, y0 + y, x0 + xx);
            return out;
        }
    }
    throw ContractError("unhandled op kind");
}

template Tensor<float> forward_compute<float>(OpKind, const OpAttrs&,
                                              const std::vector<const Tensor<float>*>&);
template Tensor<double> forward_compute<double>(OpKind, const OpAttrs&,
                                                const std::vector<const Tensor<double>*>&);

}  // namespace detail

template <typename T>
static void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": operand shapes " + a.shape().str() + " vs " +
                         b.shape().str());
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    return run<T>(OpKind::Add, {}, {&a, &b});
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    return run<T>(OpKind::Sub, {}, {&a, &b});
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    return run<T>(OpKind::Mul, {}, {&a, &b});
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return run<T>(OpKind::Relu, {}, {&a});
}

template <typename T>
Tensor<T> sqrt_ew(const Tensor<T>& a) {
    return run<T>(OpKind::Sqrt, {}, {&a});
}

template <typename T>
Tensor<T> abs_ew(const Tensor<T>& a) {
    return run<T>(OpKind::Abs, {}, {&a});
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s) {
    OpAttrs at;
    at.s0 = s;
    return run<T>(OpKind::Scale, at, {&a});
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, double c) {
    OpAttrs at;
    at.s0 = c;
    return run<T>(OpKind::AddScalar, at, {&a});
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    return run<T>(OpKind::MeanAll, {}, {&a});
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    return run<T>(OpKind::SumAll, {}, {&a});
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape().rank() == 2 && b.shape().rank() == 2,
            "matmul: rank-2 operands required, got " + a.shape().str() + " x " + b.shape().str());
    require(a.shape()[1] == b.shape()[0],
            "matmul: inner extents differ, " + a.shape().str() + " x " + b.shape().str());
    return run<T>(OpKind::Matmul, {}, {&a, &b});
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape().rank() == 3 && b.shape().rank() == 3,
            "bmm: rank-3 operands required, got " + a.shape().str() + " x " + b.shape().str());
    require(a.shape()[0] == b.shape()[0] && a.shape()[2] == b.shape()[1],
            "bmm: extents differ, " + a.shape().str() + " x " + b.shape().str());
    return run<T>(OpKind::Bmm, {}, {&a, &b});
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
    require(a.shape().rank() == 2 || a.shape().rank() == 3,
            "transpose_last2: rank 2 or 3 required, got " + a.shape().str());
    return run<T>(OpKind::TransposeLast2, {}, {&a});
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
    require(a.shape().rank() == 2 || a.shape().rank() == 3,
            "softmax_rows: rank 2 or 3 required, got " + a.shape().str());
    return run<T>(OpKind::SoftmaxLast, {}, {&a});
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape s) {
    require(s.numel() == a.size(), "reshape: element count " + std::to_string(a.size()) +
                                       " does not fit shape " + s.str());
    return run<T>(OpKind::Reshape, attrs_from_shape(s), {&a});
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
    require(!xs.empty(), "concat_channels: no inputs");
    std::vector<const Tensor<T>*> ps;
    for (const auto& x : xs) {
        require(x.shape().rank() == 4, "concat_channels: rank-4 required, got " + x.shape().str());
        require(x.shape()[0] == xs[0].shape()[0] && x.shape()[2] == xs[0].shape()[2] &&
                    x.shape()[3] == xs[0].shape()[3],
                "concat_channels: mismatched extents " + x.shape().str() + " vs " +
                    xs[0].shape().str());
        ps.push_back(&x);
    }
    return run<T>(OpKind::ConcatCh, {}, std::move(ps));
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t start, int64_t count) {
    require(x.shape().rank() == 4, "slice_channels: rank-4 required, got " + x.shape().str());
    require(start >= 0 && count >= 1 && start + count <= x.shape()[1],
            "slice_channels: range [" + std::to_string(start) + "," +
                std::to_string(start + count) + ") outside " + x.shape().str());
    OpAttrs at;
    at.i0 = start;
    at.i1 = count;
    return run<T>(OpKind::SliceCh, at, {&x});
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<int64_t>& sizes) {
    std::vector<Tensor<T>> out;
    int64_t start = 0;
    for (int64_t c : sizes) {
        out.push_back(slice_channels(x, start, c));
        start += c;
    }
    require(start == x.shape()[1], "split_channels: sizes sum " + std::to_string(start) +
                                       " != channels of " + x.shape().str());
    return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, int64_t stride,
                 int64_t padding) {
    require(x.shape().rank() == 4 && w.shape().rank() == 4,
            "conv2d: rank-4 x and w required, got " + x.shape().str() + ", " + w.shape().str());
    require(w.shape()[2] == w.shape()[3], "conv2d: square kernel required, got " + w.shape().str());
    require(x.shape()[1] == w.shape()[1],
            "conv2d: channel mismatch, x " + x.shape().str() + " vs w " + w.shape().str());
    require(stride >= 1 && padding >= 0, "conv2d: bad stride/padding");
    const int64_t k = w.shape()[2];
    require(x.shape()[2] + 2 * padding >= k && x.shape()[3] + 2 * padding >= k,
            "conv2d: kernel " + std::to_string(k) + " exceeds padded input " + x.shape().str());
    if (bias)
        require(bias->shape().rank() == 1 && bias->shape()[0] == w.shape()[0],
                "conv2d: bias shape " + bias->shape().str() + " vs w " + w.shape().str());
    OpAttrs at;
    at.i0 = stride;
    at.i1 = padding;
    std::vector<const Tensor<T>*> ps{&x, &w};
    if (bias) ps.push_back(bias);
    return run<T>(OpKind::Conv2d, at, std::move(ps));
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                           int64_t stride, int64_t padding) {
    require(x.shape().rank() == 4 && w.shape().rank() == 4,
            "conv_transpose2d: rank-4 x and w required, got " + x.shape().str() + ", " +
                w.shape().str());
    require(w.shape()[2] == w.shape()[3],
            "conv_transpose2d: square kernel required, got " + w.shape().str());
    require(x.shape()[1] == w.shape()[0],
            "conv_transpose2d: channel mismatch, x " + x.shape().str() + " vs w " +
                w.shape().str());
    require(stride >= 1 && padding >= 0, "conv_transpose2d: bad stride/padding");
    const int64_t k = w.shape()[2];
    require((x.shape()[2] - 1) * stride + k - 2 * padding >= 1 &&
                (x.shape()[3] - 1) * stride + k - 2 * padding >= 1,
            "conv_transpose2d: empty output for input " + x.shape().str());
    if (bias)
        require(bias->shape().rank() == 1 && bias->shape()[0] == w.shape()[1],
                "conv_transpose2d: bias shape " + bias->shape().str() + " vs w " +
                    w.shape().str());
    OpAttrs at;
    at.i0 = stride;
    at.i1 = padding;
    std::vector<const Tensor<T>*> ps{&x, &w};
    if (bias) ps.push_back(bias);
    return run<T>(OpKind::ConvT2d, at, std::move(ps));
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int64_t r) {
    require(x.shape().rank() == 4, "avg_pool2d: rank-4 required, got " + x.shape().str());
    require(r >= 1, "avg_pool2d: r must be >= 1");
    require(x.shape()[2] % r == 0 && x.shape()[3] % r == 0,
            "avg_pool2d: extents of " + x.shape().str() + " not divisible by " + std::to_string(r));
    OpAttrs at;
    at.i0 = r;
    return run<T>(OpKind::AvgPool, at, {&x});
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int64_t r) {
    require(x.shape().rank() == 4, "upsample_nearest: rank-4 required, got " + x.shape().str());
    require(r >= 1, "upsample_nearest: r must be >= 1");
    OpAttrs at;
    at.i0 = r;
    return run<T>(OpKind::UpsampleNearest, at, {&x});
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int64_t r) {
    require(x.shape().rank() == 4, "pixel_unshuffle: rank-4 required, got " + x.shape().str());
    require(r >= 1 && x.shape()[2] % r == 0 && x.shape()[3] % r == 0,
            "pixel_unshuffle: extents of " + x.shape().str() + " not divisible by " +
                std::to_string(r));
    OpAttrs at;
    at.i0 = r;
    return run<T>(OpKind::PixelUnshuffle, at, {&x});
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int64_t r) {
    require(x.shape().rank() == 4, "pixel_shuffle: rank-4 required, got " + x.shape().str());
    require(r >= 1 && x.shape()[1] % (r * r) == 0,
            "pixel_shuffle: channels of " + x.shape().str() + " not divisible by r^2 of " +
                std::to_string(r));
    OpAttrs at;
    at.i0 = r;
    return run<T>(OpKind::PixelShuffle, at, {&x});
}

template <typename T>
Tensor<T> layer_norm_chan(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& offset,
                          double eps) {
    require(x.shape().rank() == 4, "layer_norm_chan: rank-4 required, got " + x.shape().str());
    require(gain.shape().rank() == 1 && gain.shape()[0] == x.shape()[1],
            "layer_norm_chan: gain shape " + gain.shape().str() + " vs x " + x.shape().str());
    require(offset.shape().rank() == 1 && offset.shape()[0] == x.shape()[1],
            "layer_norm_chan: offset shape " + offset.shape().str() + " vs x " + x.shape().str());
    OpAttrs at;
    at.s0 = eps;
    return run<T>(OpKind::LayerNormCh, at, {&x, &gain, &offset});
}

template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& w) {
    require(x.shape().rank() == 4, "channel_scale: rank-4 required, got " + x.shape().str());
    require(w.shape().rank() == 1 && w.shape()[0] == x.shape()[1],
            "channel_scale: w shape " + w.shape().str() + " vs x " + x.shape().str());
    return run<T>(OpKind::ChannelScale, {}, {&x, &w});
}

template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& x, int64_t pad_h, int64_t pad_w) {
    require(x.shape().rank() == 4, "pad_reflect: rank-4 required, got " + x.shape().str());
    require(pad_h >= 0 && pad_w >= 0, "pad_reflect: negative pad");
    require(pad_h <= x.shape()[2] - 1 && pad_w <= x.shape()[3] - 1,
            "pad_reflect: pad (" + std::to_string(pad_h) + "," + std::to_string(pad_w) +
                ") too large for " + x.shape().str());
    OpAttrs at;
    at.i0 = pad_h;
    at.i1 = pad_w;
    return run<T>(OpKind::PadReflect, at, {&x});
}

template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& x, int64_t y0, int64_t x0, int64_t h, int64_t w) {
    require(x.shape().rank() == 4, "crop_spatial: rank-4 required, got " + x.shape().str());
    require(y0 >= 0 && x0 >= 0 && h >= 1 && w >= 1 && y0 + h <= x.shape()[2] &&
                x0 + w <= x.shape()[3],
            "crop_spatial: window outside " + x.shape().str());
    OpAttrs at;
    at.i0 = y0;
    at.i1 = x0;
    at.i2 = h;
    at.i3 = w;
    return run<T>(OpKind::CropSpatial, at, {&x});
}

template <typename T>
Tensor<T> finite_diff(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T h) {
    std::vector<T> buf(x.vec());
    std::vector<T> g(buf.size());
    for (size_t i = 0; i < buf.size(); ++i) {
        const T orig = buf[i];
        buf[i] = orig + h;
        const T fp = f(Tensor<T>::from(x.shape(), buf));
        buf[i] = orig - h;
        const T fm = f(Tensor<T>::from(x.shape(), buf));
        buf[i] = orig;
        g[i] = (fp - fm) / (T(2) * h);
    }
    return Tensor<T>::from(x.shape(), std::move(g));
}

#define GF_INSTANTIATE_OPS(T)                                                                      \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                  \
    template Tensor<T> sqrt_ew<T>(const Tensor<T>&);                                               \
    template Tensor<T> abs_ew<T>(const Tensor<T>&);                                                \
    template Tensor<T> scale<T>(const Tensor<T>&, double);                                         \
    template Tensor<T> add_scalar<T>(const Tensor<T>&, double);                                    \
    template Tensor<T> mean_all<T>(const Tensor<T>&);                                              \
    template Tensor<T> sum_all<T>(const Tensor<T>&);                                               \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> bmm<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> transpose_last2<T>(const Tensor<T>&);                                       \
    template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                          \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                        \
    template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                          \
    template Tensor<T> slice_channels<T>(const Tensor<T>&, int64_t, int64_t);                      \
    template std::vector<Tensor<T>> split_channels<T>(const Tensor<T>&,                            \
                                                      const std::vector<int64_t>&);               \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, int64_t,    \
                                 int64_t);                                                         \
    template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,   \
                                           int64_t, int64_t);                                      \
    template Tensor<T> avg_pool2d<T>(const Tensor<T>&, int64_t);                                   \
    template Tensor<T> upsample_nearest<T>(const Tensor<T>&, int64_t);                             \
    template Tensor<T> pixel_unshuffle<T>(const Tensor<T>&, int64_t);                              \
    template Tensor<T> pixel_shuffle<T>(const Tensor<T>&, int64_t);                                \
    template Tensor<T> layer_norm_chan<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                          double);                                                 \
    template Tensor<T> channel_scale<T>(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> pad_reflect<T>(const Tensor<T>&, int64_t, int64_t);                         \
    template Tensor<T> crop_spatial<T>(const Tensor<T>&, int64_t, int64_t, int64_t, int64_t);      \
    template Tensor<T> finite_diff<T>(const std::function<T(const Tensor<T>&)>&, const Tensor<T>&, \
                                      T);

GF_INSTANTIATE_OPS(float)
GF_INSTANTIATE_OPS(double)

#undef GF_INSTANTIATE_OPS

}  // namespace gridformer
