#pragma once

#include <cmath>
#include <vector>

#include "zfs/nn/layers.hpp"

namespace zfs::nn {

template <typename T>
class Adam {
 public:
  explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  void step(ParamSet<T>& params) {
    if (m_.empty()) {
      for (auto& [name, v] : params.items) {
        m_.emplace_back(Tensor<T>(v.shape()));
        v_.emplace_back(Tensor<T>(v.shape()));
      }
    }
    ZFS_CHECK(m_.size() == params.items.size(), "optimizer bound to a different param set");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t p = 0; p < params.items.size(); ++p) {
      auto& var = params.items[p].second;
      if (!var.requires_grad() || var.grad().numel() == 0) continue;
      Tensor<T>& m = m_[p];
      Tensor<T>& v = v_[p];
      Tensor<T>& val = var.value();
      const Tensor<T>& g = var.grad();
      for (int64_t i = 0; i < val.numel(); ++i) {
        double gi = g[i];
        double mi = beta1_ * m[i] + (1.0 - beta1_) * gi;
        double vi = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        val[i] -= static_cast<T>(lr_ * (mi / bc1) / (std::sqrt(vi / bc2) + eps_));
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace zfs::nn
