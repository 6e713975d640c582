#pragma once

#include <algorithm>
#include <limits>

#include "zfs/nn/gemm.hpp"
#include "zfs/nn/tensor.hpp"

namespace zfs::nn {

inline int64_t conv_out_size(int64_t in, int64_t k, int64_t s, int64_t p) {
  const int64_t span = in + 2 * p - k;
  return span < 0 ? 0 : span / s + 1;
}

inline int64_t pool_out_size(int64_t in, int64_t k, int64_t s) {
  return in < k ? 0 : (in - k) / s + 1;
}

/// Unpack one sample [C,H,W] into columns [C*kh*kw, Ho*Wo].
template <typename T>
void im2col(const T* x, int64_t c, int64_t h, int64_t w, int64_t k, int64_t s, int64_t p,
            int64_t ho, int64_t wo, T* cols) {
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t kh = 0; kh < k; ++kh) {
      for (int64_t kw = 0; kw < k; ++kw) {
        T* dst = cols + ((ch * k + kh) * k + kw) * ho * wo;
        for (int64_t oh = 0; oh < ho; ++oh) {
          int64_t ih = oh * s - p + kh;
          if (ih < 0 || ih >= h) {
            std::fill(dst + oh * wo, dst + (oh + 1) * wo, T(0));
            continue;
          }
          const T* src = x + (ch * h + ih) * w;
          for (int64_t ow = 0; ow < wo; ++ow) {
            int64_t iw = ow * s - p + kw;
            dst[oh * wo + ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-add columns back into the sample buffer.
template <typename T>
void col2im(const T* cols, int64_t c, int64_t h, int64_t w, int64_t k, int64_t s, int64_t p,
            int64_t ho, int64_t wo, T* x) {
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t kh = 0; kh < k; ++kh) {
      for (int64_t kw = 0; kw < k; ++kw) {
        const T* src = cols + ((ch * k + kh) * k + kw) * ho * wo;
        for (int64_t oh = 0; oh < ho; ++oh) {
          int64_t ih = oh * s - p + kh;
          if (ih < 0 || ih >= h) continue;
          T* dst = x + (ch * h + ih) * w;
          for (int64_t ow = 0; ow < wo; ++ow) {
            int64_t iw = ow * s - p + kw;
            if (iw >= 0 && iw < w) dst[iw] += src[oh * wo + ow];
          }
        }
      }
    }
  }
}

/// x [N,C,H,W], weight [O,C,k,k], bias [O] (optional, pass empty) -> [N,O,Ho,Wo]
template <typename T>
Tensor<T> conv2d_raw(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                     int64_t stride, int64_t pad) {
  ZFS_CHECK(x.ndim() == 4 && weight.ndim() == 4 && x.dim(1) == weight.dim(1),
            "conv2d input/weight mismatch");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t o = weight.dim(0), k = weight.dim(2);
  const int64_t ho = conv_out_size(h, k, stride, pad), wo = conv_out_size(w, k, stride, pad);
  ZFS_CHECK(ho > 0 && wo > 0, "conv2d output would be empty");
  Tensor<T> out({n, o, ho, wo});
  Tensor<T> cols({c * k * k, ho * wo});
  for (int64_t i = 0; i < n; ++i) {
    im2col(x.data() + i * c * h * w, c, h, w, k, stride, pad, ho, wo, cols.data());
    gemm<T>(false, false, o, ho * wo, c * k * k, T(1), weight.data(), cols.data(), T(0),
            out.data() + i * o * ho * wo);
  }
  if (!bias.empty()) {
    ZFS_CHECK(bias.numel() == o, "conv2d bias size");
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ch = 0; ch < o; ++ch) {
        T* dst = out.data() + (i * o + ch) * ho * wo;
        for (int64_t j = 0; j < ho * wo; ++j) dst[j] += bias[ch];
      }
  }
  return out;
}

/// Gradient of conv2d w.r.t. input: dx = col2im(W^T * dout).
template <typename T>
Tensor<T> conv2d_backward_data(const Tensor<T>& dout, const Tensor<T>& weight, int64_t stride,
                               int64_t pad, int64_t h, int64_t w) {
  const int64_t n = dout.dim(0), o = dout.dim(1), ho = dout.dim(2), wo = dout.dim(3);
  const int64_t c = weight.dim(1), k = weight.dim(2);
  Tensor<T> dx({n, c, h, w});
  Tensor<T> cols({c * k * k, ho * wo});
  for (int64_t i = 0; i < n; ++i) {
    gemm<T>(true, false, c * k * k, ho * wo, o, T(1), weight.data(),
            dout.data() + i * o * ho * wo, T(0), cols.data());
    col2im(cols.data(), c, h, w, k, stride, pad, ho, wo, dx.data() + i * c * h * w);
  }
  return dx;
}

/// Gradient of conv2d w.r.t. weight and bias.
template <typename T>
void conv2d_backward_filter(const Tensor<T>& dout, const Tensor<T>& x, int64_t k, int64_t stride,
                            int64_t pad, Tensor<T>& dweight, Tensor<T>& dbias) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t o = dout.dim(1), ho = dout.dim(2), wo = dout.dim(3);
  Tensor<T> cols({c * k * k, ho * wo});
  for (int64_t i = 0; i < n; ++i) {
    im2col(x.data() + i * c * h * w, c, h, w, k, stride, pad, ho, wo, cols.data());
    gemm<T>(false, true, o, c * k * k, ho * wo, T(1), dout.data() + i * o * ho * wo, cols.data(),
            T(1), dweight.data());
  }
  if (!dbias.empty()) {
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ch = 0; ch < o; ++ch) {
        const T* src = dout.data() + (i * o + ch) * ho * wo;
        T acc = 0;
        for (int64_t j = 0; j < ho * wo; ++j) acc += src[j];
        dbias[ch] += acc;
      }
  }
}

/// Transposed convolution: x [N,Ci,H,W], weight [Ci,Co,k,k] -> [N,Co,Hout,Wout]
/// with Hout = (H-1)*stride - 2*pad + k + output_padding.
template <typename T>
Tensor<T> conv_transpose2d_raw(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                               int64_t stride, int64_t pad, int64_t out_pad) {
  const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  ZFS_CHECK(weight.dim(0) == ci, "conv_transpose weight mismatch");
  const int64_t co = weight.dim(1), k = weight.dim(2);
  const int64_t hout = (h - 1) * stride - 2 * pad + k + out_pad;
  const int64_t wout = (w - 1) * stride - 2 * pad + k + out_pad;
  ZFS_CHECK(hout > 0 && wout > 0, "conv_transpose output would be empty");
  // Forward of the transpose == backward-data of a conv with weight viewed
  // as [Ci(out), Co(in), k, k] mapping [N,Co,hout,wout] -> [N,Ci,h,w].
  Tensor<T> out({n, co, hout, wout});
  Tensor<T> cols({co * k * k, h * w});
  for (int64_t i = 0; i < n; ++i) {
    gemm<T>(true, false, co * k * k, h * w, ci, T(1), weight.data(), x.data() + i * ci * h * w,
            T(0), cols.data());
    col2im(cols.data(), co, hout, wout, k, stride, pad, h, w, out.data() + i * co * hout * wout);
  }
  if (!bias.empty()) {
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ch = 0; ch < co; ++ch) {
        T* dst = out.data() + (i * co + ch) * hout * wout;
        for (int64_t j = 0; j < hout * wout; ++j) dst[j] += bias[ch];
      }
  }
  return out;
}

/// dx of conv_transpose == plain convolution of dout with the same weight.
template <typename T>
Tensor<T> conv_transpose2d_backward_data(const Tensor<T>& dout, const Tensor<T>& weight,
                                         int64_t stride, int64_t pad, int64_t h, int64_t w) {
  const int64_t n = dout.dim(0), co = dout.dim(1), hout = dout.dim(2), wout = dout.dim(3);
  const int64_t ci = weight.dim(0), k = weight.dim(2);
  Tensor<T> dx({n, ci, h, w});
  Tensor<T> cols({co * k * k, h * w});
  for (int64_t i = 0; i < n; ++i) {
    im2col(dout.data() + i * co * hout * wout, co, hout, wout, k, stride, pad, h, w, cols.data());
    gemm<T>(false, false, ci, h * w, co * k * k, T(1), weight.data(), cols.data(), T(0),
            dx.data() + i * ci * h * w);
  }
  return dx;
}

template <typename T>
void conv_transpose2d_backward_filter(const Tensor<T>& dout, const Tensor<T>& x, int64_t k,
                                      int64_t stride, int64_t pad, Tensor<T>& dweight,
                                      Tensor<T>& dbias) {
  const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t co = dout.dim(1), hout = dout.dim(2), wout = dout.dim(3);
  Tensor<T> cols({co * k * k, h * w});
  for (int64_t i = 0; i < n; ++i) {
    im2col(dout.data() + i * co * hout * wout, co, hout, wout, k, stride, pad, h, w, cols.data());
    // dW[ci, co*k*k] += x_i[ci, h*w] * cols^T
    gemm<T>(false, true, ci, co * k * k, h * w, T(1), x.data() + i * ci * h * w, cols.data(), T(1),
            dweight.data());
  }
  if (!dbias.empty()) {
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ch = 0; ch < co; ++ch) {
        const T* src = dout.data() + (i * co + ch) * hout * wout;
        T acc = 0;
        for (int64_t j = 0; j < hout * wout; ++j) acc += src[j];
        dbias[ch] += acc;
      }
  }
}

/// Max pooling with argmax capture; ties resolve to the first window element.
template <typename T>
Tensor<T> maxpool2d_raw(const Tensor<T>& x, int64_t k, int64_t s, Tensor<int64_t>* argmax) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = pool_out_size(h, k, s), wo = pool_out_size(w, k, s);
  ZFS_CHECK(ho > 0 && wo > 0, "maxpool output would be empty");
  Tensor<T> out({n, c, ho, wo});
  if (argmax) *argmax = Tensor<int64_t>({n, c, ho, wo});
  for (int64_t i = 0; i < n * c; ++i) {
    const T* src = x.data() + i * h * w;
    T* dst = out.data() + i * ho * wo;
    int64_t* am = argmax ? argmax->data() + i * ho * wo : nullptr;
    for (int64_t oh = 0; oh < ho; ++oh)
      for (int64_t ow = 0; ow < wo; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        int64_t best_idx = -1;
        for (int64_t kh = 0; kh < k; ++kh)
          for (int64_t kw = 0; kw < k; ++kw) {
            int64_t ih = oh * s + kh, iw = ow * s + kw;
            T v = src[ih * w + iw];
            if (v > best) {
              best = v;
              best_idx = ih * w + iw;
            }
          }
        dst[oh * wo + ow] = best;
        if (am) am[oh * wo + ow] = best_idx;
      }
  }
  return out;
}

}  // namespace zfs::nn
