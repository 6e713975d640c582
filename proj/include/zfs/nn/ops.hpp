#pragma once

#include <algorithm>
#include <cmath>

#include "zfs/nn/autograd.hpp"
#include "zfs/nn/conv.hpp"
#include "zfs/nn/gemm.hpp"

namespace zfs::nn {

namespace detail {

template <typename T, typename FwdFn, typename GradFn>
Var<T> unary_op(const Var<T>& a, FwdFn f, GradFn dfdx) {
  Tensor<T> out(a.shape());
  const Tensor<T>& x = a.value();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  auto an = a.node();
  auto saved = out;
  return make_op<T>(std::move(out), {a}, [an, saved, dfdx](Node<T>& n) {
    an->ensure_grad();
    const Tensor<T>& x = an->value;
    for (int64_t i = 0; i < x.numel(); ++i) an->grad[i] += n.grad[i] * dfdx(x[i], saved[i]);
  });
}

}  // namespace detail

// ---- elementwise arithmetic ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  ZFS_CHECK(a.shape() == b.shape(), "add shape mismatch");
  Tensor<T> out = a.value() + b.value();
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>& n) {
    if (an->requires_grad) an->accum_grad(n.grad);
    if (bn->requires_grad) bn->accum_grad(n.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  ZFS_CHECK(a.shape() == b.shape(), "sub shape mismatch");
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>& n) {
    if (an->requires_grad) an->accum_grad(n.grad);
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) bn->grad[i] -= n.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  ZFS_CHECK(a.shape() == b.shape(), "mul shape mismatch");
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) an->grad[i] += n.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) bn->grad[i] += n.grad[i] * an->value[i];
    }
  });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  ZFS_CHECK(a.shape() == b.shape(), "div shape mismatch");
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] / b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) an->grad[i] += n.grad[i] / bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) {
        T bv = bn->value[i];
        bn->grad[i] -= n.grad[i] * an->value[i] / (bv * bv);
      }
    }
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  return detail::unary_op(
      a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T c) {
  return detail::unary_op(
      a, [c](T x) { return x * c; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return mul_scalar(a, T(-1));
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return detail::unary_op(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary_op(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh_(const Var<T>& a) {
  return detail::unary_op(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> exp_(const Var<T>& a) {
  return detail::unary_op(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log_(const Var<T>& a) {
  return detail::unary_op(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> sqrt_(const Var<T>& a) {
  return detail::unary_op(
      a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return detail::unary_op(
      a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return detail::unary_op(
      a, [lo, hi](T x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

// ---- reductions ----

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  double acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a.value()[i]);
  auto an = a.node();
  return make_op<T>(Tensor<T>::scalar(static_cast<T>(acc)), {a}, [an](Node<T>& n) {
    an->ensure_grad();
    T g = n.grad[0];
    for (int64_t i = 0; i < an->grad.numel(); ++i) an->grad[i] += g;
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  const int64_t m = a.numel();
  double acc = 0;
  for (int64_t i = 0; i < m; ++i) acc += static_cast<double>(a.value()[i]);
  auto an = a.node();
  return make_op<T>(Tensor<T>::scalar(static_cast<T>(acc / m)), {a}, [an, m](Node<T>& n) {
    an->ensure_grad();
    T g = n.grad[0] / static_cast<T>(m);
    for (int64_t i = 0; i < an->grad.numel(); ++i) an->grad[i] += g;
  });
}

template <typename T>
Var<T> logsumexp_all(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  T mx = x[0];
  for (int64_t i = 1; i < x.numel(); ++i) mx = std::max(mx, x[i]);
  double s = 0;
  for (int64_t i = 0; i < x.numel(); ++i) s += std::exp(static_cast<double>(x[i] - mx));
  T lse = mx + static_cast<T>(std::log(s));
  auto an = a.node();
  return make_op<T>(Tensor<T>::scalar(lse), {a}, [an, lse](Node<T>& n) {
    an->ensure_grad();
    T g = n.grad[0];
    for (int64_t i = 0; i < an->grad.numel(); ++i)
      an->grad[i] += g * std::exp(an->value[i] - lse);
  });
}

/// Row-wise log-sum-exp: [N,M] -> [N].
template <typename T>
Var<T> logsumexp_rows(const Var<T>& a) {
  ZFS_CHECK(a.shape().size() == 2, "logsumexp_rows needs a matrix");
  const int64_t rows = a.dim(0), cols = a.dim(1);
  Tensor<T> out({rows});
  const Tensor<T>& x = a.value();
  for (int64_t r = 0; r < rows; ++r) {
    T mx = x[r * cols];
    for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, x[r * cols + c]);
    double s = 0;
    for (int64_t c = 0; c < cols; ++c) s += std::exp(static_cast<double>(x[r * cols + c] - mx));
    out[r] = mx + static_cast<T>(std::log(s));
  }
  auto an = a.node();
  auto saved = out;
  return make_op<T>(std::move(out), {a}, [an, saved, rows, cols](Node<T>& n) {
    an->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      T g = n.grad[r];
      for (int64_t c = 0; c < cols; ++c)
        an->grad[r * cols + c] += g * std::exp(an->value[r * cols + c] - saved[r]);
    }
  });
}

// ---- shape ops ----

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  auto an = a.node();
  return make_op<T>(std::move(out), {a}, [an](Node<T>& n) {
    an->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) an->grad[i] += n.grad[i];
  });
}

/// [N,C,H,W] -> [N*H*W, C]: one row per spatial location.
template <typename T>
Var<T> nchw_to_rows(const Var<T>& a) {
  ZFS_CHECK(a.shape().size() == 4, "nchw_to_rows needs NCHW");
  const int64_t n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  Tensor<T> out({n * h * w, c});
  const Tensor<T>& x = a.value();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* src = x.data() + (i * c + ch) * h * w;
      for (int64_t s = 0; s < h * w; ++s) out[(i * h * w + s) * c + ch] = src[s];
    }
  auto an = a.node();
  return make_op<T>(std::move(out), {a}, [an, n, c, h, w](Node<T>& nd) {
    an->ensure_grad();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ch = 0; ch < c; ++ch) {
        T* dst = an->grad.data() + (i * c + ch) * h * w;
        for (int64_t s = 0; s < h * w; ++s) dst[s] += nd.grad[(i * h * w + s) * c + ch];
      }
  });
}

template <typename T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
  ZFS_CHECK(a.shape().size() == 2 && b.shape().size() == 2 && a.dim(0) == b.dim(0),
            "concat_cols shape mismatch");
  const int64_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
  Tensor<T> out({n, da + db});
  for (int64_t i = 0; i < n; ++i) {
    std::copy(a.value().data() + i * da, a.value().data() + (i + 1) * da,
              out.data() + i * (da + db));
    std::copy(b.value().data() + i * db, b.value().data() + (i + 1) * db,
              out.data() + i * (da + db) + da);
  }
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn, n, da, db](Node<T>& nd) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < da; ++j) an->grad[i * da + j] += nd.grad[i * (da + db) + j];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < db; ++j) bn->grad[i * db + j] += nd.grad[i * (da + db) + da + j];
    }
  });
}

/// Select rows of a matrix by index (duplicates allowed).
template <typename T>
Var<T> gather_rows(const Var<T>& a, std::vector<int64_t> idx) {
  ZFS_CHECK(a.shape().size() == 2, "gather_rows needs a matrix");
  const int64_t d = a.dim(1), rows = a.dim(0);
  Tensor<T> out({static_cast<int64_t>(idx.size()), d});
  for (size_t i = 0; i < idx.size(); ++i) {
    ZFS_CHECK(idx[i] >= 0 && idx[i] < rows, "gather_rows index out of range");
    std::copy(a.value().data() + idx[i] * d, a.value().data() + (idx[i] + 1) * d,
              out.data() + static_cast<int64_t>(i) * d);
  }
  auto an = a.node();
  return make_op<T>(std::move(out), {a}, [an, idx = std::move(idx), d](Node<T>& n) {
    an->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i)
      for (int64_t j = 0; j < d; ++j)
        an->grad[idx[i] * d + j] += n.grad[static_cast<int64_t>(i) * d + j];
  });
}

/// Gather arbitrary flat positions into a tensor of the given shape.
template <typename T>
Var<T> gather_flat(const Var<T>& a, std::vector<int64_t> idx, Shape out_shape) {
  ZFS_CHECK(shape_numel(out_shape) == static_cast<int64_t>(idx.size()),
            "gather_flat shape/index mismatch");
  Tensor<T> out(std::move(out_shape));
  const int64_t n = a.numel();
  for (size_t i = 0; i < idx.size(); ++i) {
    ZFS_CHECK(idx[i] >= 0 && idx[i] < n, "gather_flat index out of range");
    out[static_cast<int64_t>(i)] = a.value()[idx[i]];
  }
  auto an = a.node();
  return make_op<T>(std::move(out), {a}, [an, idx = std::move(idx)](Node<T>& nd) {
    an->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i)
      an->grad[idx[i]] += nd.grad[static_cast<int64_t>(i)];
  });
}

// ---- linear algebra ----

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = matmul_raw(a.value(), b.value());
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>& n) {
    const int64_t m = an->value.dim(0), k = an->value.dim(1), p = bn->value.dim(1);
    if (an->requires_grad) {
      an->ensure_grad();
      gemm<T>(false, true, m, k, p, T(1), n.grad.data(), bn->value.data(), T(1),
              an->grad.data());
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      gemm<T>(true, false, k, p, m, T(1), an->value.data(), n.grad.data(), T(1),
              bn->grad.data());
    }
  });
}

/// y = x * W^T + b with x [N,in], W [out,in], b [out] (b may be undefined).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  ZFS_CHECK(x.shape().size() == 2 && w.shape().size() == 2 && x.dim(1) == w.dim(1),
            "linear shape mismatch");
  const int64_t n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  Tensor<T> out({n, out_dim});
  gemm<T>(false, true, n, out_dim, in, T(1), x.value().data(), w.value().data(), T(0),
          out.data());
  const bool has_bias = b.defined();
  if (has_bias) {
    ZFS_CHECK(b.numel() == out_dim, "linear bias size");
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += b.value()[j];
  }
  auto xn = x.node(), wn = w.node();
  auto bnode = has_bias ? b.node() : nullptr;
  std::vector<Var<T>> parents = {x, w};
  if (has_bias) parents.push_back(b);
  return make_op<T>(std::move(out), std::move(parents),
                    [xn, wn, bnode, n, in, out_dim](Node<T>& nd) {
                      if (xn->requires_grad) {
                        xn->ensure_grad();
                        gemm<T>(false, false, n, in, out_dim, T(1), nd.grad.data(),
                                wn->value.data(), T(1), xn->grad.data());
                      }
                      if (wn->requires_grad) {
                        wn->ensure_grad();
                        gemm<T>(true, false, out_dim, in, n, T(1), nd.grad.data(),
                                xn->value.data(), T(1), wn->grad.data());
                      }
                      if (bnode && bnode->requires_grad) {
                        bnode->ensure_grad();
                        for (int64_t i = 0; i < n; ++i)
                          for (int64_t j = 0; j < out_dim; ++j)
                            bnode->grad[j] += nd.grad[i * out_dim + j];
                      }
                    });
}

// ---- convolution / pooling ----

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride, int64_t pad) {
  Tensor<T> out = conv2d_raw(x.value(), w.value(), b.defined() ? b.value() : Tensor<T>(), stride,
                             pad);
  auto xn = x.node(), wn = w.node();
  auto bnode = b.defined() ? b.node() : nullptr;
  std::vector<Var<T>> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  const int64_t h = x.dim(2), wdim = x.dim(3), k = w.dim(2);
  return make_op<T>(std::move(out), std::move(parents),
                    [xn, wn, bnode, stride, pad, h, wdim, k](Node<T>& nd) {
                      if (xn->requires_grad) {
                        xn->ensure_grad();
                        Tensor<T> dx =
                            conv2d_backward_data(nd.grad, wn->value, stride, pad, h, wdim);
                        xn->accum_grad(dx);
                      }
                      if (wn->requires_grad) {
                        wn->ensure_grad();
                        Tensor<T> dbias;
                        if (bnode && bnode->requires_grad) {
                          bnode->ensure_grad();
                          conv2d_backward_filter(nd.grad, xn->value, k, stride, pad, wn->grad,
                                                 bnode->grad);
                          return;
                        }
                        conv2d_backward_filter(nd.grad, xn->value, k, stride, pad, wn->grad,
                                               dbias);
                      }
                    });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride,
                        int64_t pad, int64_t out_pad) {
  Tensor<T> out = conv_transpose2d_raw(x.value(), w.value(),
                                       b.defined() ? b.value() : Tensor<T>(), stride, pad,
                                       out_pad);
  auto xn = x.node(), wn = w.node();
  auto bnode = b.defined() ? b.node() : nullptr;
  std::vector<Var<T>> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  const int64_t h = x.dim(2), wdim = x.dim(3), k = w.dim(2);
  return make_op<T>(std::move(out), std::move(parents),
                    [xn, wn, bnode, stride, pad, h, wdim, k](Node<T>& nd) {
                      if (xn->requires_grad) {
                        xn->ensure_grad();
                        Tensor<T> dx = conv_transpose2d_backward_data(nd.grad, wn->value, stride,
                                                                      pad, h, wdim);
                        xn->accum_grad(dx);
                      }
                      if (wn->requires_grad) {
                        wn->ensure_grad();
                        Tensor<T> dbias;
                        if (bnode && bnode->requires_grad) {
                          bnode->ensure_grad();
                          conv_transpose2d_backward_filter(nd.grad, xn->value, k, stride, pad,
                                                           wn->grad, bnode->grad);
                          return;
                        }
                        conv_transpose2d_backward_filter(nd.grad, xn->value, k, stride, pad,
                                                         wn->grad, dbias);
                      }
                    });
}

template <typename T>
Var<T> maxpool2d(const Var<T>& x, int64_t k, int64_t s) {
  Tensor<int64_t> argmax;
  Tensor<T> out = maxpool2d_raw(x.value(), k, s, &argmax);
  auto xn = x.node();
  const int64_t hw = x.dim(2) * x.dim(3), nc = x.dim(0) * x.dim(1);
  const int64_t ohw = out.dim(2) * out.dim(3);
  return make_op<T>(std::move(out), {x},
                    [xn, argmax = std::move(argmax), hw, nc, ohw](Node<T>& nd) {
                      xn->ensure_grad();
                      for (int64_t i = 0; i < nc; ++i) {
                        T* dst = xn->grad.data() + i * hw;
                        const T* g = nd.grad.data() + i * ohw;
                        const int64_t* am = argmax.data() + i * ohw;
                        for (int64_t j = 0; j < ohw; ++j) dst[am[j]] += g[j];
                      }
                    });
}

// ---- batch normalization ----

/// Batch norm over NCHW (spatial=true) or NC (spatial=false). Running stats
/// are plain tensors owned by the caller and updated in train mode.
template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                 Tensor<T>& running_mean, Tensor<T>& running_var, bool training, double momentum,
                 double eps, bool spatial) {
  const int64_t n = x.dim(0);
  const int64_t c = x.dim(1);
  const int64_t hw = spatial ? x.dim(2) * x.dim(3) : 1;
  const int64_t m = n * hw;
  ZFS_CHECK(gamma.numel() == c && beta.numel() == c, "batchnorm affine size mismatch");

  Tensor<T> mean({c}), var({c});
  if (training) {
    for (int64_t ch = 0; ch < c; ++ch) {
      double acc = 0;
      for (int64_t i = 0; i < n; ++i) {
        const T* src = x.value().data() + (i * c + ch) * hw;
        for (int64_t j = 0; j < hw; ++j) acc += static_cast<double>(src[j]);
      }
      double mu = acc / m;
      double vacc = 0;
      for (int64_t i = 0; i < n; ++i) {
        const T* src = x.value().data() + (i * c + ch) * hw;
        for (int64_t j = 0; j < hw; ++j) {
          double d = static_cast<double>(src[j]) - mu;
          vacc += d * d;
        }
      }
      mean[ch] = static_cast<T>(mu);
      var[ch] = static_cast<T>(vacc / m);
      double unbiased = m > 1 ? vacc / (m - 1) : vacc / m;
      running_mean[ch] =
          static_cast<T>((1.0 - momentum) * running_mean[ch] + momentum * mu);
      running_var[ch] =
          static_cast<T>((1.0 - momentum) * running_var[ch] + momentum * unbiased);
    }
  } else {
    mean = running_mean;
    var = running_var;
  }

  Tensor<T> inv_std({c});
  for (int64_t ch = 0; ch < c; ++ch)
    inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[ch]) + eps));

  Tensor<T> xhat(x.shape());
  Tensor<T> out(x.shape());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* src = x.value().data() + (i * c + ch) * hw;
      T* xh = xhat.data() + (i * c + ch) * hw;
      T* dst = out.data() + (i * c + ch) * hw;
      const T g = gamma.value()[ch], bta = beta.value()[ch], mu = mean[ch], is = inv_std[ch];
      for (int64_t j = 0; j < hw; ++j) {
        xh[j] = (src[j] - mu) * is;
        dst[j] = g * xh[j] + bta;
      }
    }

  auto xn = x.node();
  auto gn = gamma.node(), btn = beta.node();
  return make_op<T>(
      std::move(out), {x, gamma, beta},
      [xn, gn, btn, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, hw, m,
       training](Node<T>& nd) {
        // dgamma / dbeta
        for (int64_t ch = 0; ch < c; ++ch) {
          double dg = 0, db = 0;
          for (int64_t i = 0; i < n; ++i) {
            const T* g = nd.grad.data() + (i * c + ch) * hw;
            const T* xh = xhat.data() + (i * c + ch) * hw;
            for (int64_t j = 0; j < hw; ++j) {
              dg += static_cast<double>(g[j]) * xh[j];
              db += static_cast<double>(g[j]);
            }
          }
          if (gn->requires_grad) {
            gn->ensure_grad();
            gn->grad[ch] += static_cast<T>(dg);
          }
          if (btn->requires_grad) {
            btn->ensure_grad();
            btn->grad[ch] += static_cast<T>(db);
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            const T gam = gn->value[ch], is = inv_std[ch];
            if (!training) {
              for (int64_t i = 0; i < n; ++i) {
                const T* g = nd.grad.data() + (i * c + ch) * hw;
                T* dx = xn->grad.data() + (i * c + ch) * hw;
                for (int64_t j = 0; j < hw; ++j) dx[j] += g[j] * gam * is;
              }
            } else {
              const double mean_dy = db / m;
              const double mean_dy_xhat = dg / m;
              for (int64_t i = 0; i < n; ++i) {
                const T* g = nd.grad.data() + (i * c + ch) * hw;
                const T* xh = xhat.data() + (i * c + ch) * hw;
                T* dx = xn->grad.data() + (i * c + ch) * hw;
                for (int64_t j = 0; j < hw; ++j)
                  dx[j] += static_cast<T>(gam * is *
                                          (static_cast<double>(g[j]) - mean_dy -
                                           static_cast<double>(xh[j]) * mean_dy_xhat));
              }
            }
          }
        }
      });
}

// ---- losses ----

/// Mean cross-entropy of softmax(logits) against integer labels.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int64_t>& labels) {
  ZFS_CHECK(logits.shape().size() == 2, "softmax_ce needs [N,C] logits");
  const int64_t n = logits.dim(0), c = logits.dim(1);
  ZFS_CHECK(static_cast<int64_t>(labels.size()) == n, "softmax_ce label count");
  Tensor<T> probs({n, c});
  double loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    ZFS_CHECK(labels[i] >= 0 && labels[i] < c, "label out of range");
    const T* row = logits.value().data() + i * c;
    T mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double s = 0;
    for (int64_t j = 0; j < c; ++j) s += std::exp(static_cast<double>(row[j] - mx));
    double lse = std::log(s) + mx;
    for (int64_t j = 0; j < c; ++j)
      probs[i * c + j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - lse));
    loss += lse - static_cast<double>(row[labels[i]]);
  }
  auto ln = logits.node();
  return make_op<T>(Tensor<T>::scalar(static_cast<T>(loss / n)), {logits},
                    [ln, probs = std::move(probs), labels, n, c](Node<T>& nd) {
                      ln->ensure_grad();
                      const T g = nd.grad[0] / static_cast<T>(n);
                      for (int64_t i = 0; i < n; ++i)
                        for (int64_t j = 0; j < c; ++j) {
                          T p = probs[i * c + j] - (labels[i] == j ? T(1) : T(0));
                          ln->grad[i * c + j] += g * p;
                        }
                    });
}

/// Mean binary cross-entropy with logits; optional per-feature positive-class
/// weight (for class imbalance). targets is a constant tensor of 0/1.
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets,
                       const Tensor<T>& pos_weight) {
  ZFS_CHECK(logits.shape() == targets.shape(), "bce shape mismatch");
  const int64_t n = logits.numel();
  const int64_t d = logits.shape().size() == 2 ? logits.dim(1) : 1;
  const bool weighted = !pos_weight.empty();
  if (weighted) ZFS_CHECK(pos_weight.numel() == d, "bce pos_weight size");
  double loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    double z = logits.value()[i], t = targets[i];
    double pw = weighted ? static_cast<double>(pos_weight[i % d]) : 1.0;
    // -[pw*t*log(sig(z)) + (1-t)*log(1-sig(z))], stable form
    double sp_neg = z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
    double sp_pos = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    loss += pw * t * sp_neg + (1.0 - t) * sp_pos;
  }
  auto ln = logits.node();
  return make_op<T>(Tensor<T>::scalar(static_cast<T>(loss / n)), {logits},
                    [ln, targets, pos_weight, weighted, n, d](Node<T>& nd) {
                      ln->ensure_grad();
                      const T g = nd.grad[0] / static_cast<T>(n);
                      for (int64_t i = 0; i < n; ++i) {
                        double z = ln->value[i], t = targets[i];
                        double pw = weighted ? static_cast<double>(pos_weight[i % d]) : 1.0;
                        double sig = 1.0 / (1.0 + std::exp(-z));
                        double dz = (1.0 - t) * sig - pw * t * (1.0 - sig);
                        ln->grad[i] += g * static_cast<T>(dz);
                      }
                    });
}

template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Tensor<T>& target) {
  ZFS_CHECK(pred.shape() == target.shape(), "mse shape mismatch");
  const int64_t n = pred.numel();
  double loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    double d = static_cast<double>(pred.value()[i]) - target[i];
    loss += d * d;
  }
  auto pn = pred.node();
  return make_op<T>(Tensor<T>::scalar(static_cast<T>(loss / n)), {pred},
                    [pn, target, n](Node<T>& nd) {
                      pn->ensure_grad();
                      const T g = nd.grad[0] * T(2) / static_cast<T>(n);
                      for (int64_t i = 0; i < n; ++i)
                        pn->grad[i] += g * (pn->value[i] - target[i]);
                    });
}

/// Multi-class InfoNCE over score rows: positive logit in column 0.
/// loss = mean_i [ logsumexp(row_i) - row_i[0] ].
template <typename T>
Var<T> infonce_rows(const Var<T>& scores) {
  ZFS_CHECK(scores.shape().size() == 2, "infonce needs [N,M] scores");
  const int64_t n = scores.dim(0), m = scores.dim(1);
  Tensor<T> lse({n});
  double loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    const T* row = scores.value().data() + i * m;
    T mx = row[0];
    for (int64_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    double s = 0;
    for (int64_t j = 0; j < m; ++j) s += std::exp(static_cast<double>(row[j] - mx));
    lse[i] = mx + static_cast<T>(std::log(s));
    loss += static_cast<double>(lse[i]) - static_cast<double>(row[0]);
  }
  auto sn = scores.node();
  return make_op<T>(Tensor<T>::scalar(static_cast<T>(loss / n)), {scores},
                    [sn, lse = std::move(lse), n, m](Node<T>& nd) {
                      sn->ensure_grad();
                      const T g = nd.grad[0] / static_cast<T>(n);
                      for (int64_t i = 0; i < n; ++i) {
                        for (int64_t j = 0; j < m; ++j) {
                          T p = std::exp(sn->value[i * m + j] - lse[i]);
                          sn->grad[i * m + j] += g * (p - (j == 0 ? T(1) : T(0)));
                        }
                      }
                    });
}

// ---- pairwise / similarity ----

/// Squared Euclidean distances: x [N,D], p [C,D] -> [N,C].
template <typename T>
Var<T> pairwise_sqdist(const Var<T>& x, const Var<T>& p) {
  ZFS_CHECK(x.shape().size() == 2 && p.shape().size() == 2 && x.dim(1) == p.dim(1),
            "pairwise_sqdist shape mismatch");
  const int64_t n = x.dim(0), c = p.dim(0), d = x.dim(1);
  Tensor<T> out({n, c});
  gemm<T>(false, true, n, c, d, T(-2), x.value().data(), p.value().data(), T(0), out.data());
  std::vector<double> xn2(n), pn2(c);
  for (int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (int64_t j = 0; j < d; ++j) {
      double v = x.value()[i * d + j];
      s += v * v;
    }
    xn2[i] = s;
  }
  for (int64_t i = 0; i < c; ++i) {
    double s = 0;
    for (int64_t j = 0; j < d; ++j) {
      double v = p.value()[i * d + j];
      s += v * v;
    }
    pn2[i] = s;
  }
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < c; ++j)
      out[i * c + j] = static_cast<T>(std::max(0.0, out[i * c + j] + xn2[i] + pn2[j]));
  auto xnn = x.node(), pnn = p.node();
  return make_op<T>(std::move(out), {x, p}, [xnn, pnn, n, c, d](Node<T>& nd) {
    // dx_i = 2 * (sum_j g_ij) * x_i - 2 * g * p ; dp symmetric.
    if (xnn->requires_grad) {
      xnn->ensure_grad();
      gemm<T>(false, false, n, d, c, T(-2), nd.grad.data(), pnn->value.data(), T(1),
              xnn->grad.data());
      for (int64_t i = 0; i < n; ++i) {
        double rs = 0;
        for (int64_t j = 0; j < c; ++j) rs += nd.grad[i * c + j];
        for (int64_t j = 0; j < d; ++j)
          xnn->grad[i * d + j] += static_cast<T>(2.0 * rs) * xnn->value[i * d + j];
      }
    }
    if (pnn->requires_grad) {
      pnn->ensure_grad();
      gemm<T>(true, false, c, d, n, T(-2), nd.grad.data(), xnn->value.data(), T(1),
              pnn->grad.data());
      for (int64_t j = 0; j < c; ++j) {
        double cs = 0;
        for (int64_t i = 0; i < n; ++i) cs += nd.grad[i * c + j];
        for (int64_t k = 0; k < d; ++k)
          pnn->grad[j * d + k] += static_cast<T>(2.0 * cs) * pnn->value[j * d + k];
      }
    }
  });
}

/// Row dot products of two [N,D] matrices -> [N].
template <typename T>
Var<T> rowwise_dot(const Var<T>& a, const Var<T>& b) {
  ZFS_CHECK(a.shape() == b.shape() && a.shape().size() == 2, "rowwise_dot shape mismatch");
  const int64_t n = a.dim(0), d = a.dim(1);
  Tensor<T> out({n});
  for (int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (int64_t j = 0; j < d; ++j)
      s += static_cast<double>(a.value()[i * d + j]) * b.value()[i * d + j];
    out[i] = static_cast<T>(s);
  }
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn, n, d](Node<T>& nd) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j)
          an->grad[i * d + j] += nd.grad[i] * bn->value[i * d + j];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j)
          bn->grad[i * d + j] += nd.grad[i] * an->value[i * d + j];
    }
  });
}

/// Euclidean norm of each row -> [N]. A small epsilon keeps the gradient
/// finite at the origin.
template <typename T>
Var<T> rowwise_norm(const Var<T>& a, double eps = 1e-12) {
  ZFS_CHECK(a.shape().size() == 2, "rowwise_norm needs a matrix");
  const int64_t n = a.dim(0), d = a.dim(1);
  Tensor<T> out({n});
  for (int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (int64_t j = 0; j < d; ++j) {
      double v = a.value()[i * d + j];
      s += v * v;
    }
    out[i] = static_cast<T>(std::sqrt(s + eps));
  }
  auto an = a.node();
  auto saved = out;
  return make_op<T>(std::move(out), {a}, [an, saved, n, d](Node<T>& nd) {
    an->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      T inv = nd.grad[i] / saved[i];
      for (int64_t j = 0; j < d; ++j) an->grad[i * d + j] += inv * an->value[i * d + j];
    }
  });
}

/// Cross scores for infomax objectives: S[i,j,m] = <Pg[j], Pl[i,:,m]>
/// with Pg [B,d] (projected globals) and Pl [B,d,M] (projected locals).
template <typename T>
Var<T> cross_scores(const Var<T>& pg, const Var<T>& pl) {
  ZFS_CHECK(pg.shape().size() == 2 && pl.shape().size() == 3 && pg.dim(1) == pl.dim(1) &&
                pg.dim(0) == pl.dim(0),
            "cross_scores shape mismatch");
  const int64_t b = pg.dim(0), d = pg.dim(1), m = pl.dim(2);
  Tensor<T> out({b, b, m});
  for (int64_t i = 0; i < b; ++i) {
    gemm<T>(false, false, b, m, d, T(1), pg.value().data(), pl.value().data() + i * d * m, T(0),
            out.data() + i * b * m);
  }
  auto gn = pg.node(), lnn = pl.node();
  return make_op<T>(std::move(out), {pg, pl}, [gn, lnn, b, d, m](Node<T>& nd) {
    if (gn->requires_grad) {
      gn->ensure_grad();
      for (int64_t i = 0; i < b; ++i)
        gemm<T>(false, true, b, d, m, T(1), nd.grad.data() + i * b * m,
                lnn->value.data() + i * d * m, T(1), gn->grad.data());
    }
    if (lnn->requires_grad) {
      lnn->ensure_grad();
      for (int64_t i = 0; i < b; ++i)
        gemm<T>(true, false, d, m, b, T(1), gn->value.data(), nd.grad.data() + i * b * m, T(1),
                lnn->grad.data() + i * d * m);
    }
  });
}

}  // namespace zfs::nn
