#include "gridformer/tape.hpp"

#include <cmath>

#include "forward.hpp"
#include "kernels.hpp"

namespace gridformer {

const char* op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Relu: return "relu";
        case OpKind::Sqrt: return "sqrt";
        case OpKind::Abs: return "abs";
        case OpKind::Scale: return "scale";
        case OpKind::AddScalar: return "add_scalar";
        case OpKind::MeanAll: return "mean_all";
        case OpKind::SumAll: return "sum_all";
        case OpKind::Matmul: return "matmul";
        case OpKind::Bmm: return "bmm";
        case OpKind::TransposeLast2: return "transpose_last2";
        case OpKind::SoftmaxLast: return "softmax_last";
        case OpKind::Reshape: return "reshape";
        case OpKind::ConcatCh: return "concat_channels";
        case OpKind::SliceCh: return "slice_channels";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::ConvT2d: return "conv_transpose2d";
        case OpKind::AvgPool: return "avg_pool2d";
        case OpKind::UpsampleNearest: return "upsample_nearest";
        case OpKind::PixelShuffle: return "pixel_shuffle";
        case OpKind::PixelUnshuffle: return "pixel_unshuffle";
        case OpKind::LayerNormCh: return "layer_norm_chan";
        case OpKind::ChannelScale: return "channel_scale";
        case OpKind::PadReflect: return "pad_reflect";
        case OpKind::CropSpatial: return "crop_spatial";
    }
    return "unknown";
}

template <typename T>
Tensor<T> Tape<T>::leaf(const Tensor<T>& v) {
    Tensor<T> out = v.detached();
    record(OpKind::Leaf, {}, {}, out);
    return out;
}

template <typename T>
Tensor<T> Tape<T>::watch(Parameter<T>& p) {
    auto it = watched_.find(&p);
    if (it != watched_.end()) return nodes_[static_cast<size_t>(it->second)].value;
    Tensor<T> out = p.value.detached();
    const int id = record(OpKind::Leaf, {}, {}, out);
    watched_.emplace(&p, id);
    return out;
}

template <typename T>
int Tape<T>::record(OpKind kind, std::vector<int> parents, OpAttrs attrs, Tensor<T>& value) {
    const int id = static_cast<int>(nodes_.size());
    for (int pid : parents)
        if (pid < 0 || pid >= id) throw ContractError("tape parent id out of range");
    value.bind(this, id);
    nodes_.push_back(TapeNode<T>{kind, std::move(parents), attrs, value, {}});
    return id;
}

template <typename T>
std::vector<T>& Tape<T>::grad_buffer(int id) {
    auto& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.value.size()), T(0));
    return n.grad;
}

// Per-op adjoint: accumulate n's grad into its parents' grads.
template <typename T>
void Tape<T>::push_to_parents(TapeNode<T>& n) {
    const std::vector<T>& g = n.grad;
    const auto& ps = n.parents;
    const auto pval = [&](int i) -> const Tensor<T>& {
        return nodes_[static_cast<size_t>(ps[static_cast<size_t>(i)])].value;
    };
    const auto pg = [&](int i) -> std::vector<T>& {
        return grad_buffer(ps[static_cast<size_t>(i)]);
    };
    switch (n.kind) {
        case OpKind::Leaf:
            return;
        case OpKind::Add: {
            auto &da = pg(0), &db = pg(1);
            for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            for (size_t i = 0; i < g.size(); ++i) db[i] += g[i];
            return;
        }
        case OpKind::Sub: {
            auto &da = pg(0), &db = pg(1);
            for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            for (size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
            return;
        }
        case OpKind::Mul: {
            const Tensor<T>&a = pval(0), &b = pval(1);
            auto& da = pg(0);
            for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[static_cast<int64_t>(i)];
            auto& db = pg(1);
            for (size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[static_cast<int64_t>(i)];
            return;
        }
        case OpKind::Relu: {
            const Tensor<T>& a = pval(0);
            auto& da = pg(0);
            for (size_t i = 0; i < g.size(); ++i)
                if (a[static_cast<int64_t>(i)] > T(0)) da[i] += g[i];
            return;
        }
        case OpKind::Sqrt: {
            auto& da = pg(0);
            for (size_t i = 0; i < g.size(); ++i)
                da[i] += g[i] * T(0.5) / n.value[static_cast<int64_t>(i)];
            return;
        }
        case OpKind::Abs: {
            const Tensor<T>& a = pval(0);
            auto& da = pg(0);
            for (size_t i = 0; i < g.size(); ++i) {
                const T x = a[static_cast<int64_t>(i)];
                if (x > T(0)) da[i] += g[i];
                else if (x < T(0)) da[i] -= g[i];
            }
            return;
        }
        case OpKind::Scale: {
            const T s = static_cast<T>(n.attrs.s0);
            auto& da = pg(0);
            for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * s;
            return;
        }
        case OpKind::AddScalar:
        case OpKind::Reshape: {
            auto& da = pg(0);
            for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            return;
        }
        case OpKind::MeanAll: {
            auto& da = pg(0);
            const T gv = g[0] / static_cast<T>(da.size());
            for (auto& v : da) v += gv;
            return;
        }
        case OpKind::SumAll: {
            auto& da = pg(0);
            for (auto& v : da) v += g[0];
            return;
        }
        case OpKind::Matmul: {
            const Tensor<T>&a = pval(0), &b = pval(1);
            const int64_t m = a.shape()[0], k = a.shape()[1], nn = b.shape()[1];
            kernels::gemm_nt(g.data(), b.data(), pg(0).data(), m, nn, k);
            kernels::gemm_tn(a.data(), g.data(), pg(1).data(), k, m, nn);
            return;
        }
        case OpKind::Bmm: {
            const Tensor<T>&a = pval(0), &b = pval(1);
            const int64_t bs = a.shape()[0], m = a.shape()[1], k = a.shape()[2],
                          nn = b.shape()[2];
            auto &da = pg(0), &db = pg(1);
            for (int64_t i = 0; i < bs; ++i) {
                kernels::gemm_nt(g.data() + i * m * nn, b.data() + i * k * nn,
                                 da.data() + i * m * k, m, nn, k);
                kernels::gemm_tn(a.data() + i * m * k, g.data() + i * m * nn,
                                 db.data() + i * k * nn, k, m, nn);
            }
            return;
        }
        case OpKind::TransposeLast2: {
            const Shape& s = pval(0).shape();
            const bool batched = s.rank() == 3;
            const int64_t bs = batched ? s[0] : 1;
            const int64_t m = s[batched ? 1 : 0], nn = s[batched ? 2 : 1];
            auto& da = pg(0);
            for (int64_t b = 0; b < bs; ++b) {
                const T* gp = g.data() + b * m * nn;
                T* dp = da.data() + b * m * nn;
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < nn; ++j) dp[i * nn + j] += gp[j * m + i];
            }
            return;
        }
        case OpKind::SoftmaxLast: {
            const Shape& s = n.value.shape();
            const int64_t nn = s[s.rank() - 1];
            kernels::softmax_rows_backward(n.value.data(), g.data(), pg(0).data(),
                                           n.value.size() / nn, nn);
            return;
        }
        case OpKind::ConcatCh: {
            const Shape& os = n.value.shape();
            const int64_t plane = os[2] * os[3], ctot = os[1];
            int64_t co = 0;
            for (size_t pi = 0; pi < ps.size(); ++pi) {
                const int64_t c = pval(static_cast<int>(pi)).shape()[1];
                auto& da = pg(static_cast<int>(pi));
                for (int64_t img = 0; img < os[0]; ++img) {
                    const T* src = g.data() + (img * ctot + co) * plane;
                    T* dst = da.data() + img * c * plane;
                    for (int64_t i = 0; i < c * plane; ++i) dst[i] += src[i];
                }
                co += c;
            }
            return;
        }
        case OpKind::SliceCh: {
            const Shape& is = pval(0).shape();
            const int64_t plane = is[2] * is[3], start = n.attrs.i0, count = n.attrs.i1;
            auto& da = pg(0);
            for (int64_t img = 0; img < is[0]; ++img) {
                const T* src = g.data() + img * count * plane;
                T* dst = da.data() + (img * is[1] + start) * plane;
                for (int64_t i = 0; i < count * plane; ++i) dst[i] += src[i];
            }
            return;
        }
        case OpKind::Conv2d: {
            const Tensor<T>&x = pval(0), &w = pval(1);
            const Shape &xs = x.shape(), &ws = w.shape();
            const int64_t stride = n.attrs.i0, pad = n.attrs.i1;
            std::vector<T> scratch;
            kernels::conv2d_backward_data(g.data(), w.data(), pg(0).data(), xs[0], xs[1], xs[2],
                                          xs[3], ws[0], ws[2], stride, pad, scratch);
            kernels::conv2d_backward_filter(x.data(), g.data(), pg(1).data(),
                                            ps.size() > 2 ? pg(2).data() : nullptr, xs[0], xs[1],
                                            xs[2], xs[3], ws[0], ws[2], stride, pad, scratch);
            return;
        }
        case OpKind::ConvT2d: {
            const Tensor<T>&x = pval(0), &w = pval(1);
            const Shape &ws = w.shape(), &os = n.value.shape();
            const int64_t stride = n.attrs.i0, pad = n.attrs.i1;
            std::vector<T> scratch;
            // dx runs the paired conv forward; temp buffer because the conv
            // kernel overwrites its output.
            std::vector<T> tmp(static_cast<size_t>(x.size()), T(0));
            kernels::conv2d_forward(g.data(), w.data(), static_cast<const T*>(nullptr), tmp.data(),
                                    os[0], os[1], os[2], os[3], ws[0], ws[2], stride, pad,
                                    scratch);
            auto& da = pg(0);
            for (size_t i = 0; i < tmp.size(); ++i) da[i] += tmp[i];
            kernels::conv2d_backward_filter(g.data(), x.data(), pg(1).data(),
                                            static_cast<T*>(nullptr), os[0], os[1], os[2], os[3],
                                            ws[0], ws[2], stride, pad, scratch);
            if (ps.size() > 2) {
                auto& db = pg(2);
                const int64_t plane = os[2] * os[3];
                for (int64_t img = 0; img < os[0]; ++img)
                    for (int64_t c = 0; c < os[1]; ++c) {
                        const T* src = g.data() + (img * os[1] + c) * plane;
                        T acc = T(0);
                        for (int64_t p = 0; p < plane; ++p) acc += src[p];
                        db[static_cast<size_t>(c)] += acc;
                    }
            }
            return;
        }
        case OpKind::AvgPool: {
            const Shape& is = pval(0).shape();
            const int64_t r = n.attrs.i0, ho = is[2] / r, wo = is[3] / r;
            const T inv = T(1) / static_cast<T>(r * r);
            auto& da = pg(0);
            const T* gp = g.data();
            for (int64_t img = 0; img < is[0]; ++img)
                for (int64_t c = 0; c < is[1]; ++c) {
                    T* dc = da.data() + (img * is[1] + c) * is[2] * is[3];
                    for (int64_t y = 0; y < ho; ++y)
                        for (int64_t xx = 0; xx < wo; ++xx) {
                            const T gv = *gp++ * inv;
                            for (int64_t dy = 0; dy < r; ++dy)
                                for (int64_t dx = 0; dx < r; ++dx)
                                    dc[(y * r + dy) * is[3] + xx * r + dx] += gv;
                        }
                }
            return;
        }
        case OpKind::UpsampleNearest: {
            const Shape& is = pval(0).shape();
            const int64_t r = n.attrs.i0, ho = is[2] * r, wo = is[3] * r;
            auto& da = pg(0);
            const T* gp = g.data();
            for (int64_t img = 0; img < is[0]; ++img)
                for (int64_t c = 0; c < is[1]; ++c) {
                    T* dc = da.data() + (img * is[1] + c) * is[2] * is[3];
                    for (int64_t y = 0; y < ho; ++y)
                        for (int64_t xx = 0; xx < wo; ++xx)
                            dc[(y / r) * is[3] + xx / r] += *gp++;
                }
            return;
        }
        case OpKind::PixelUnshuffle: {
            const Shape& is = pval(0).shape();
            const Shape& os = n.value.shape();
            const int64_t r = n.attrs.i0, co = os[1], ho = os[2], wo = os[3];
            auto& da = pg(0);
            for (int64_t img = 0; img < is[0]; ++img)
                for (int64_t c = 0; c < is[1]; ++c)
                    for (int64_t dy = 0; dy < r; ++dy)
                        for (int64_t dx = 0; dx < r; ++dx) {
                            const int64_t oc = (c * r + dy) * r + dx;
                            for (int64_t y = 0; y < ho; ++y)
                                for (int64_t xx = 0; xx < wo; ++xx)
                                    da[static_cast<size_t>(
                                        ((img * is[1] + c) * is[2] + y * r + dy) * is[3] +
                                        xx * r + dx)] +=
                                        g[static_cast<size_t>(((img * co + oc) * ho + y) * wo +
                                                              xx)];
                        }
            return;
        }
        case OpKind::PixelShuffle: {
            const Shape& is = pval(0).shape();
            const Shape& os = n.value.shape();
            const int64_t r = n.attrs.i0, co = os[1], ho = os[2], wo = os[3];
            auto& da = pg(0);
            for (int64_t img = 0; img < is[0]; ++img)
                for (int64_t oc = 0; oc < co; ++oc)
                    for (int64_t y = 0; y < ho; ++y)
                        for (int64_t xx = 0; xx < wo; ++xx) {
                            const int64_t ic = (oc * r + y % r) * r + xx % r;
                            da[static_cast<size_t>(
                                ((img * is[1] + ic) * is[2] + y / r) * is[3] + xx / r)] +=
                                g[static_cast<size_t>(((img * co + oc) * ho + y) * wo + xx)];
                        }
            return;
        }
        case OpKind::LayerNormCh: {
            const Tensor<T>&x = pval(0), &gain = pval(1);
            const Shape& s = x.shape();
            kernels::layer_norm_chan_backward(x.data(), gain.data(), g.data(), pg(0).data(),
                                              pg(1).data(), pg(2).data(), s[0], s[1], s[2], s[3],
                                              n.attrs.s0);
            return;
        }
        case OpKind::ChannelScale: {
            const Tensor<T>&x = pval(0), &w = pval(1);
            const Shape& s = x.shape();
            const int64_t plane = s[2] * s[3];
            auto &dx = pg(0), &dw = pg(1);
            for (int64_t img = 0; img < s[0]; ++img)
                for (int64_t c = 0; c < s[1]; ++c) {
                    const int64_t base = (img * s[1] + c) * plane;
                    const T wc = w[c];
                    T acc = T(0);
                    for (int64_t p = 0; p < plane; ++p) {
                        dx[static_cast<size_t>(base + p)] += g[static_cast<size_t>(base + p)] * wc;
                        acc += g[static_cast<size_t>(base + p)] * x[base + p];
                    }
                    dw[static_cast<size_t>(c)] += acc;
                }
            return;
        }
        case OpKind::PadReflect: {
            const Shape& is = pval(0).shape();
            const Shape& os = n.value.shape();
            auto& da = pg(0);
            const T* gp = g.data();
            for (int64_t img = 0; img < is[0]; ++img)
                for (int64_t c = 0; c < is[1]; ++c) {
                    T* dc = da.data() + (img * is[1] + c) * is[2] * is[3];
                    for (int64_t y = 0; y < os[2]; ++y) {
                        const int64_t sy = y < is[2] ? y : 2 * is[2] - 2 - y;
                        for (int64_t xx = 0; xx < os[3]; ++xx) {
                            const int64_t sx = xx < is[3] ? xx : 2 * is[3] - 2 - xx;
                            dc[sy * is[3] + sx] += *gp++;
                        }
                    }
                }
            return;
        }
        case OpKind::CropSpatial: {
            const Shape& is = pval(0).shape();
            const int64_t y0 = n.attrs.i0, x0 = n.attrs.i1, h = n.attrs.i2, w = n.attrs.i3;
            auto& da = pg(0);
            const T* gp = g.data();
            for (int64_t img = 0; img < is[0]; ++img)
                for (int64_t c = 0; c < is[1]; ++c) {
                    T* dc = da.data() + (img * is[1] + c) * is[2] * is[3];
                    for (int64_t y = 0; y < h; ++y)
                        for (int64_t xx = 0; xx < w; ++xx)
                            dc[(y0 + y) * is[3] + x0 + xx] += *gp++;
                }
            return;
        }
    }
    throw ContractError("unhandled op kind in backward");
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& root) {
    if (!root.on_tape() || root.tape() != this)
        throw ContractError("backward root is not recorded on this tape");
    if (root.size() != 1)
        throw ContractError("backward root must be scalar, shape is " + root.shape().str());
    for (auto& n : nodes_) n.grad.clear();
    const int rid = root.node();
    nodes_[static_cast<size_t>(rid)].grad.assign(1, T(1));
    for (int id = rid; id >= 0; --id) {
        TapeNode<T>& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.empty()) continue;
        push_to_parents(n);
    }
    for (auto& [param, id] : watched_) {
        if (!param->has_grad()) param->zero_grad();
        const auto& g = nodes_[static_cast<size_t>(id)].grad;
        if (g.empty()) continue;
        T* dst = param->grad.mut();
        for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
}

template <typename T>
Tensor<T> Tape<T>::grad_of(const Tensor<T>& t) const {
    if (!t.on_tape() || t.tape() != this)
        throw ContractError("grad_of target is not recorded on this tape");
    const auto& n = nodes_[static_cast<size_t>(t.node())];
    if (n.grad.empty()) return Tensor<T>::zeros(n.value.shape());
    return Tensor<T>::from(n.value.shape(), std::vector<T>(n.grad));
}

template <typename T>
void Tape<T>::replay() {
    for (auto& n : nodes_) {
        if (n.kind == OpKind::Leaf) continue;
        std::vector<const Tensor<T>*> ps;
        ps.reserve(n.parents.size());
        for (int pid : n.parents) ps.push_back(&nodes_[static_cast<size_t>(pid)].value);
        Tensor<T> v = detail::forward_compute<T>(n.kind, n.attrs, ps);
        // Write into the recorded buffer so downstream references track it.
        T* dst = n.value.mut();
        for (int64_t i = 0; i < v.size(); ++i) dst[i] = v[i];
    }
}

template <typename T>
int enlist(Tape<T>& tape, const Tensor<T>& t) {
    if (t.on_tape()) {
        if (t.tape() != &tape) throw ContractError("operand is recorded on a different tape");
        return t.node();
    }
    Tensor<T> copy = t.detached();
    return tape.record(OpKind::Leaf, {}, {}, copy);
}

template <typename T>
Tape<T>* common_tape(std::initializer_list<const Tensor<T>*> ts) {
    Tape<T>* tape = nullptr;
    for (const Tensor<T>* t : ts) {
        if (!t->on_tape()) continue;
        if (tape && tape != t->tape())
            throw ContractError("operands are recorded on different tapes");
        tape = t->tape();
    }
    return tape;
}

template class Tape<float>;
template class Tape<double>;
template int enlist<float>(Tape<float>&, const Tensor<float>&);
template int enlist<double>(Tape<double>&, const Tensor<double>&);
template Tape<float>* common_tape<float>(std::initializer_list<const Tensor<float>*>);
template Tape<double>* common_tape<double>(std::initializer_list<const Tensor<double>*>);

}  // namespace gridformer
