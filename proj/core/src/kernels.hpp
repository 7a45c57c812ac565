#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

// Raw single-threaded numeric kernels over row-major buffers. Loop orders are
// fixed; reruns on identical inputs are bit-identical.

namespace gridformer::kernels {

// C (MxN) += A (MxK) * B (KxN)
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const T av = ai[p];
            if (av == T(0)) continue;
            const T* bp = b + p * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C (MxN) += A (MxK) * B^T, B stored (NxK)
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const T* bj = b + j * k;
            T acc = T(0);
            for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

// C (MxN) += A^T * B, A stored (KxM), B stored (KxN)
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t p = 0; p < k; ++p) {
        const T* ap = a + p * m;
        const T* bp = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            const T av = ap[i];
            if (av == T(0)) continue;
            T* ci = c + i * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// x (C,H,W) -> col (C*k*k, Ho*Wo); out-of-bounds taps read zero.
template <typename T>
void im2col(const T* x, T* col, int64_t c, int64_t h, int64_t w, int64_t k, int64_t stride,
            int64_t pad, int64_t ho, int64_t wo) {
    const int64_t plane = ho * wo;
    for (int64_t ch = 0; ch < c; ++ch) {
        const T* xc = x + ch * h * w;
        for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
                T* row = col + ((ch * k + ky) * k + kx) * plane;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        for (int64_t ox = 0; ox < wo; ++ox) row[oy * wo + ox] = T(0);
                        continue;
                    }
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * stride + kx - pad;
                        row[oy * wo + ox] = (ix < 0 || ix >= w) ? T(0) : xc[iy * w + ix];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters col (C*k*k, Ho*Wo) back into x (C,H,W),
// accumulating overlapping taps. x must be pre-zeroed.
template <typename T>
void col2im(const T* col, T* x, int64_t c, int64_t h, int64_t w, int64_t k, int64_t stride,
            int64_t pad, int64_t ho, int64_t wo) {
    const int64_t plane = ho * wo;
    for (int64_t ch = 0; ch < c; ++ch) {
        T* xc = x + ch * h * w;
        for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
                const T* row = col + ((ch * k + ky) * k + kx) * plane;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= w) continue;
                        xc[iy * w + ix] += row[oy * wo + ox];
                    }
                }
            }
        }
    }
}

// out (N,Cout,Ho,Wo) = conv2d(x (N,Cin,H,W), w (Cout,Cin,k,k)) + bias.
// 1x1/stride-1/pad-0 goes straight to GEMM, no im2col copy.
template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* out, int64_t n, int64_t cin,
                    int64_t h, int64_t wd, int64_t cout, int64_t k, int64_t stride, int64_t pad,
                    std::vector<T>& col_scratch) {
    const int64_t ho = conv_out_extent(h, k, stride, pad);
    const int64_t wo = conv_out_extent(wd, k, stride, pad);
    const int64_t plane = ho * wo;
    const int64_t ckk = cin * k * k;
    const bool direct = (k == 1 && stride == 1 && pad == 0);
    if (!direct) col_scratch.assign(static_cast<size_t>(ckk * plane), T(0));
    for (int64_t img = 0; img < n; ++img) {
        const T* xi = x + img * cin * h * wd;
        T* oi = out + img * cout * plane;
        if (bias) {
            for (int64_t oc = 0; oc < cout; ++oc)
                for (int64_t p = 0; p < plane; ++p) oi[oc * plane + p] = bias[oc];
        } else {
            for (int64_t i = 0; i < cout * plane; ++i) oi[i] = T(0);
        }
        const T* col = xi;
        if (!direct) {
            im2col(xi, col_scratch.data(), cin, h, wd, k, stride, pad, ho, wo);
            col = col_scratch.data();
        }
        gemm_nn(w, col, oi, cout, ckk, plane);
    }
}

// dx (N,Cin,H,W) += adjoint of conv2d given dout (N,Cout,Ho,Wo). dx must be
// pre-zeroed. Shared by conv2d backward-data and conv_transpose2d forward.
template <typename T>
void conv2d_backward_data(const T* dout, const T* w, T* dx, int64_t n, int64_t cin, int64_t h,
                          int64_t wd, int64_t cout, int64_t k, int64_t stride, int64_t pad,
                          std::vector<T>& col_scratch) {
    const int64_t ho = conv_out_extent(h, k, stride, pad);
    const int64_t wo = conv_out_extent(wd, k, stride, pad);
    const int64_t plane = ho * wo;
    const int64_t ckk = cin * k * k;
    const bool direct = (k == 1 && stride == 1 && pad == 0);
    for (int64_t img = 0; img < n; ++img) {
        const T* di = dout + img * cout * plane;
        T* xi = dx + img * cin * h * wd;
        if (direct) {
            gemm_tn(w, di, xi, cin, cout, plane);
            continue;
        }
        col_scratch.assign(static_cast<size_t>(ckk * plane), T(0));
        gemm_tn(w, di, col_scratch.data(), ckk, cout, plane);
        col2im(col_scratch.data(), xi, cin, h, wd, k, stride, pad, ho, wo);
    }
}

// dw (Cout,Cin,k,k) += dout * im2col(x)^T; db (Cout) += row sums of dout.
// dw/db must be pre-zeroed by the caller on first use.
template <typename T>
void conv2d_backward_filter(const T* x, const T* dout, T* dw, T* db, int64_t n, int64_t cin,
                            int64_t h, int64_t wd, int64_t cout, int64_t k, int64_t stride,
                            int64_t pad, std::vector<T>& col_scratch) {
    const int64_t ho = conv_out_extent(h, k, stride, pad);
    const int64_t wo = conv_out_extent(wd, k, stride, pad);
    const int64_t plane = ho * wo;
    const int64_t ckk = cin * k * k;
    const bool direct = (k == 1 && stride == 1 && pad == 0);
    if (!direct) col_scratch.assign(static_cast<size_t>(ckk * plane), T(0));
    for (int64_t img = 0; img < n; ++img) {
        const T* xi = x + img * cin * h * wd;
        const T* di = dout + img * cout * plane;
        const T* col = xi;
        if (!direct) {
            im2col(xi, col_scratch.data(), cin, h, wd, k, stride, pad, ho, wo);
            col = col_scratch.data();
        }
        gemm_nt(di, col, dw, cout, plane, ckk);
        if (db) {
            for (int64_t oc = 0; oc < cout; ++oc) {
                T acc = T(0);
                const T* row = di + oc * plane;
                for (int64_t p = 0; p < plane; ++p) acc += row[p];
                db[oc] += acc;
            }
        }
    }
}

// Per-row softmax of a (rows, n) matrix, max-subtracted for stability.
template <typename T>
void softmax_rows(const T* x, T* out, int64_t rows, int64_t n) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* xi = x + r * n;
        T* oi = out + r * n;
        T mx = xi[0];
        for (int64_t j = 1; j < n; ++j) mx = xi[j] > mx ? xi[j] : mx;
        T sum = T(0);
        for (int64_t j = 0; j < n; ++j) {
            oi[j] = std::exp(xi[j] - mx);
            sum += oi[j];
        }
        const T inv = T(1) / sum;
        for (int64_t j = 0; j < n; ++j) oi[j] *= inv;
    }
}

// dx = (d - <d,s>) * s per row, where s is the stored softmax output.
template <typename T>
void softmax_rows_backward(const T* s, const T* d, T* dx, int64_t rows, int64_t n) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* si = s + r * n;
        const T* di = d + r * n;
        T* oi = dx + r * n;
        T dot = T(0);
        for (int64_t j = 0; j < n; ++j) dot += di[j] * si[j];
        for (int64_t j = 0; j < n; ++j) oi[j] += (di[j] - dot) * si[j];
    }
}

// Channel layernorm over NCHW: per (n,y,x) site, normalize across C.
template <typename T>
void layer_norm_chan_forward(const T* x, const T* gain, const T* offset, T* out, int64_t n,
                             int64_t c, int64_t h, int64_t w, double eps) {
    const int64_t plane = h * w;
    for (int64_t img = 0; img < n; ++img) {
        const T* xi = x + img * c * plane;
        T* oi = out + img * c * plane;
        for (int64_t p = 0; p < plane; ++p) {
            T mu = T(0);
            for (int64_t ch = 0; ch < c; ++ch) mu += xi[ch * plane + p];
            mu /= T(c);
            T var = T(0);
            for (int64_t ch = 0; ch < c; ++ch) {
                const T d = xi[ch * plane + p] - mu;
                var += d * d;
            }
            var /= T(c);
            const T inv = T(1) / std::sqrt(var + T(eps));
            for (int64_t ch = 0; ch < c; ++ch) {
                const T xhat = (xi[ch * plane + p] - mu) * inv;
                oi[ch * plane + p] = gain[ch] * xhat + offset[ch];
            }
        }
    }
}

// dx = inv * (gd - mean(gd) - xhat * mean(gd * xhat)), gd = dout * gain.
// Accumulates into dx/dgain/doffset.
template <typename T>
void layer_norm_chan_backward(const T* x, const T* gain, const T* dout, T* dx, T* dgain,
                              T* doffset, int64_t n, int64_t c, int64_t h, int64_t w, double eps) {
    const int64_t plane = h * w;
    std::vector<T> xhat(static_cast<size_t>(c));
    std::vector<T> gd(static_cast<size_t>(c));
    for (int64_t img = 0; img < n; ++img) {
        const T* xi = x + img * c * plane;
        const T* di = dout + img * c * plane;
        T* dxi = dx + img * c * plane;
        for (int64_t p = 0; p < plane; ++p) {
            T mu = T(0);
            for (int64_t ch = 0; ch < c; ++ch) mu += xi[ch * plane + p];
            mu /= T(c);
            T var = T(0);
            for (int64_t ch = 0; ch < c; ++ch) {
                const T d = xi[ch * plane + p] - mu;
                var += d * d;
            }
            var /= T(c);
            const T inv = T(1) / std::sqrt(var + T(eps));
            T gd_mean = T(0), gdx_mean = T(0);
            for (int64_t ch = 0; ch < c; ++ch) {
                xhat[ch] = (xi[ch * plane + p] - mu) * inv;
                gd[ch] = di[ch * plane + p] * gain[ch];
                gd_mean += gd[ch];
                gdx_mean += gd[ch] * xhat[ch];
            }
            gd_mean /= T(c);
            gdx_mean /= T(c);
            for (int64_t ch = 0; ch < c; ++ch) {
                dxi[ch * plane + p] += inv * (gd[ch] - gd_mean - xhat[ch] * gdx_mean);
                dgain[ch] += di[ch * plane + p] * xhat[ch];
                doffset[ch] += di[ch * plane + p];
            }
        }
    }
}

}  // namespace gridformer::kernels
