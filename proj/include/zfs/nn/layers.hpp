#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "zfs/nn/ops.hpp"
#include "zfs/nn/rng.hpp"

namespace zfs::nn {

/// Named parameter registry shared by all trainable modules. Order of
/// registration is the canonical order for optimizers and checkpoints.
template <typename T>
struct ParamSet {
  std::vector<std::pair<std::string, Var<T>>> items;

  Var<T> add(const std::string& name, Tensor<T> init) {
    items.emplace_back(name, parameter(std::move(init)));
    return items.back().second;
  }
  void zero_grad() {
    for (auto& [name, v] : items) v.zero_grad();
  }
  void set_trainable(bool on) {
    for (auto& [name, v] : items) v.node()->requires_grad = on;
  }
  int64_t count() const {
    int64_t n = 0;
    for (const auto& [name, v] : items) n += v.numel();
    return n;
  }
};

template <typename T>
struct Linear {
  Var<T> w, b;
  int64_t in = 0, out = 0;

  Linear() = default;
  Linear(ParamSet<T>& ps, const std::string& name, int64_t in_dim, int64_t out_dim, Rng& rng)
      : in(in_dim), out(out_dim) {
    double std = std::sqrt(2.0 / in_dim);  // fan-in scaled
    w = ps.add(name + ".w", rng.template gaussian_tensor<T>({out_dim, in_dim}, std));
    b = ps.add(name + ".b", Tensor<T>({out_dim}));
  }
  Var<T> forward(const Var<T>& x) const { return linear(x, w, b); }
};

template <typename T>
struct Conv2d {
  Var<T> w, b;
  int64_t k = 0, stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamSet<T>& ps, const std::string& name, int64_t in_ch, int64_t out_ch, int64_t kernel,
         int64_t s, int64_t p, Rng& rng)
      : k(kernel), stride(s), pad(p) {
    double std = std::sqrt(2.0 / (in_ch * kernel * kernel));
    w = ps.add(name + ".w", rng.template gaussian_tensor<T>({out_ch, in_ch, kernel, kernel}, std));
    b = ps.add(name + ".b", Tensor<T>({out_ch}));
  }
  Var<T> forward(const Var<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct ConvTranspose2d {
  Var<T> w, b;
  int64_t k = 0, stride = 1, pad = 0, out_pad = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(ParamSet<T>& ps, const std::string& name, int64_t in_ch, int64_t out_ch,
                  int64_t kernel, int64_t s, int64_t p, int64_t op, Rng& rng)
      : k(kernel), stride(s), pad(p), out_pad(op) {
    double std = std::sqrt(2.0 / (in_ch * kernel * kernel));
    w = ps.add(name + ".w", rng.template gaussian_tensor<T>({in_ch, out_ch, kernel, kernel}, std));
    b = ps.add(name + ".b", Tensor<T>({out_ch}));
  }
  Var<T> forward(const Var<T>& x) const { return conv_transpose2d(x, w, b, stride, pad, out_pad); }
};

template <typename T>
struct BatchNorm {
  Var<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  bool spatial = true;
  double momentum = 0.1, eps = 1e-5;

  BatchNorm() = default;
  BatchNorm(ParamSet<T>& ps, const std::string& name, int64_t channels, bool spatial_mode)
      : spatial(spatial_mode) {
    gamma = ps.add(name + ".gamma", Tensor<T>::full({channels}, T(1)));
    beta = ps.add(name + ".beta", Tensor<T>({channels}));
    running_mean = Tensor<T>({channels});
    running_var = Tensor<T>::full({channels}, T(1));
  }
  Var<T> forward(const Var<T>& x, bool training) {
    return batchnorm(x, gamma, beta, running_mean, running_var, training, momentum, eps, spatial);
  }
};

/// Two-layer perceptron: in -> hidden (ReLU) -> out.
template <typename T>
struct Mlp {
  Linear<T> l1, l2;

  Mlp() = default;
  Mlp(ParamSet<T>& ps, const std::string& name, int64_t in, int64_t hidden, int64_t out, Rng& rng)
      : l1(ps, name + ".l1", in, hidden, rng), l2(ps, name + ".l2", hidden, out, rng) {}
  Var<T> forward(const Var<T>& x) const { return l2.forward(relu(l1.forward(x))); }
};

}  // namespace zfs::nn
