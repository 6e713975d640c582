#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "zfs/nn/tensor.hpp"

namespace zfs::nn {

/// Deterministic random source. Gaussian sampling is done by hand (polar
/// Box-Muller) so that streams do not depend on the standard library's
/// distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed ^ 0x9e3779b97f4a7c15ULL), base_seed_(seed) {}

  /// Independent child stream, keyed by a label. Used to decouple e.g. data
  /// shuffling from weight init so adding one consumer does not shift another.
  Rng fork(const std::string& tag) const {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](uint64_t v) {
      h ^= v;
      h *= 1099511628211ULL;
    };
    mix(base_seed_);
    for (char c : tag) mix(static_cast<uint64_t>(static_cast<unsigned char>(c)));
    Rng r;
    r.gen_.seed(h);
    r.base_seed_ = h;
    return r;
  }

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  int64_t randint(int64_t n) {
    ZFS_CHECK(n > 0, "randint on empty range");
    return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  template <typename It>
  void shuffle(It first, It last) {
    auto n = static_cast<int64_t>(last - first);
    for (int64_t i = n - 1; i > 0; --i) {
      std::swap(first[i], first[randint(i + 1)]);
    }
  }

  template <typename T>
  Tensor<T> gaussian_tensor(Shape shape, double stddev) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(gaussian() * stddev);
    return t;
  }

  template <typename T>
  Tensor<T> uniform_tensor(Shape shape, double lo, double hi) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(uniform(lo, hi));
    return t;
  }

 private:
  std::mt19937_64 gen_;
  uint64_t base_seed_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace zfs::nn
