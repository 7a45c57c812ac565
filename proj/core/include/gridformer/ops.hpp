#pragma once

#include <functional>
#include <vector>

#include "gridformer/tape.hpp"

namespace gridformer {

// Differentiable tensor operations. Each computes eagerly; when an operand is
// bound to a tape the result is recorded there. Shapes are validated up front
// and violations throw ShapeError naming the offending extents.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);
template <typename T>
Tensor<T> sqrt_ew(const Tensor<T>& a);
template <typename T>
Tensor<T> abs_ew(const Tensor<T>& a);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, double c);
template <typename T>
Tensor<T> mean_all(const Tensor<T>& a);
template <typename T>
Tensor<T> sum_all(const Tensor<T>& a);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& a);
// Softmax over the last axis of a rank-2 or rank-3 tensor; rows of a [M,N]
// input in the rank-2 case. Stable via per-row max subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape s);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs);
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t start, int64_t count);
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<int64_t>& sizes);

// Cross-correlation with zero padding; x: NCHW, w: [Cout,Cin,k,k], optional
// bias [Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, int64_t stride,
                 int64_t padding);
// Adjoint of conv2d with the same (w, stride, padding): maps conv2d's output
// space back to its input space. Optional bias is over the produced channels.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                           int64_t stride, int64_t padding);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int64_t stride, int64_t padding) {
    return conv2d(x, w, static_cast<const Tensor<T>*>(nullptr), stride, padding);
}
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, int64_t stride,
                           int64_t padding) {
    return conv_transpose2d(x, w, static_cast<const Tensor<T>*>(nullptr), stride, padding);
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int64_t r);
template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int64_t r);

// Channel ordering: unshuffle writes source offset (dy,dx) of channel c to
// output channel c*r^2 + dy*r + dx; shuffle is the exact inverse.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int64_t r);
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int64_t r);

// Normalizes over the channel axis per (n,y,x) position; gain/offset are
// per-channel vectors of length C.
template <typename T>
Tensor<T> layer_norm_chan(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& offset,
                          double eps = 1e-5);

// out[n,c,h,w] = x[n,c,h,w] * w[c]
template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& w);

// Reflect-pad bottom/right by (pad_h, pad_w); extents must exceed the pad.
template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& x, int64_t pad_h, int64_t pad_w);
template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& x, int64_t y0, int64_t x0, int64_t h, int64_t w);

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per element. The
// gradient oracle: pure forward evaluation, no tape involvement.
template <typename T>
Tensor<T> finite_diff(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T h);

// Parameter binding helper: watch on the tape when recording, otherwise use
// the raw value.
template <typename T>
inline Tensor<T> bind(Parameter<T>& p, Tape<T>* tape) {
    return tape ? tape->watch(p) : p.value;
}

}  // namespace gridformer
