#pragma once

#include <optional>
#include <vector>

#include "zfs/nn/adam.hpp"
#include "zfs/nn/ops.hpp"

namespace zfs::tre {

/// Per-attribute thresholding at the attribute's mean over the train-split
/// classes, strict greater-than. Constant columns come out all-zero and are
/// flagged.
nn::Tensor<float> binarize_attributes(const nn::Tensor<float>& attrs,
                                      const std::vector<int64_t>& train_classes,
                                      std::vector<uint8_t>* constant_flagged = nullptr);

struct TreBudget {
  int64_t max_steps = 1200;
  double lr = 1e-2;
  double rel_tol = 1e-5;  // early stop when relative improvement over the
  int64_t window = 100;   // trailing window falls below rel_tol
};

/// Mean cosine distance between features and summed attribute embeddings:
/// (1/|X|) sum_x [1 - cos(f(x), sum_{a in D(x)} eta_a)]. Rows with empty
/// D(x) are excluded from the mean.
template <typename T>
nn::Var<T> tre_objective(const nn::Var<T>& eta, const nn::Tensor<T>& features,
                         const nn::Tensor<T>& dmat) {
  ZFS_CHECK(features.dim(0) == dmat.dim(0), "tre features/assignments mismatch");
  nn::Var<T> comp = nn::matmul(nn::constant(dmat), eta);  // [N, D]
  nn::Var<T> f = nn::constant(features);
  nn::Var<T> cosine =
      nn::div(nn::rowwise_dot(f, comp), nn::mul(nn::rowwise_norm(f), nn::rowwise_norm(comp)));
  return nn::sub(nn::constant(nn::Tensor<T>::scalar(T(1))), nn::mean_all(cosine));
}

template <typename T>
struct TreFit {
  nn::Tensor<T> eta;  // [A, feature_dim]
  double tre = 0;     // objective value at eta on the fitting set
  std::vector<double> curve;
  int64_t excluded = 0;
  int64_t steps_run = 0;
};

/// Drop rows whose assignment vector is empty; returns surviving row indices.
template <typename T>
std::vector<int64_t> nonempty_rows(const nn::Tensor<T>& dmat) {
  std::vector<int64_t> keep;
  for (int64_t i = 0; i < dmat.dim(0); ++i) {
    bool any = false;
    for (int64_t j = 0; j < dmat.dim(1); ++j) any = any || dmat.at2(i, j) != T(0);
    if (any) keep.push_back(i);
  }
  return keep;
}

template <typename T>
nn::Tensor<T> take_rows(const nn::Tensor<T>& m, const std::vector<int64_t>& rows) {
  nn::Tensor<T> out({static_cast<int64_t>(rows.size()), m.dim(1)});
  for (size_t i = 0; i < rows.size(); ++i)
    for (int64_t j = 0; j < m.dim(1); ++j) out.at2(static_cast<int64_t>(i), j) = m.at2(rows[i], j);
  return out;
}

/// Full-batch Adam fit of the embedding table; returns the best table seen.
template <typename T>
TreFit<T> fit_tre(const nn::Tensor<T>& features, const nn::Tensor<T>& dmat, uint64_t seed,
                  const TreBudget& budget = {}) {
  auto keep = nonempty_rows(dmat);
  TreFit<T> out;
  out.excluded = dmat.dim(0) - static_cast<int64_t>(keep.size());
  ZFS_CHECK(!keep.empty(), "tre fit: every datapoint has an empty attribute set");
  nn::Tensor<T> f = take_rows(features, keep);
  nn::Tensor<T> d = take_rows(dmat, keep);

  nn::Rng rng(seed);
  nn::Rng init = rng.fork("tre-init");
  const int64_t a = dmat.dim(1), dim = features.dim(1);
  nn::ParamSet<T> params;
  nn::Var<T> eta = params.add("eta", init.template gaussian_tensor<T>({a, dim}, 0.01));
  nn::Adam<T> opt(budget.lr);

  double best = std::numeric_limits<double>::infinity();
  nn::Tensor<T> best_eta = eta.value();
  double window_ref = std::numeric_limits<double>::infinity();
  for (int64_t step = 0; step < budget.max_steps; ++step) {
    params.zero_grad();
    nn::Var<T> loss = tre_objective(eta, f, d);
    const double v = static_cast<double>(loss.value()[0]);
    if (v < best) {
      best = v;
      best_eta = eta.value();
    }
    if (step % 10 == 0) out.curve.push_back(v);
    if (step % budget.window == 0) {
      if (window_ref - v < budget.rel_tol * std::max(1e-12, std::abs(window_ref)) && step > 0) {
        out.steps_run = step;
        break;
      }
      window_ref = v;
    }
    nn::backward(loss);
    opt.step(params);
    out.steps_run = step + 1;
  }
  out.eta = std::move(best_eta);
  out.tre = best;
  return out;
}

template <typename T>
double tre_value(const nn::Tensor<T>& eta, const nn::Tensor<T>& features,
                 const nn::Tensor<T>& dmat, int64_t* excluded = nullptr) {
  auto keep = nonempty_rows(dmat);
  if (excluded) *excluded = dmat.dim(0) - static_cast<int64_t>(keep.size());
  ZFS_CHECK(!keep.empty(), "tre: every datapoint has an empty attribute set");
  nn::Tensor<T> f = take_rows(features, keep);
  nn::Tensor<T> d = take_rows(dmat, keep);
  nn::Var<T> e = nn::constant(eta);
  return static_cast<double>(tre_objective(e, f, d).value()[0]);
}

struct TreRatioConfig {
  uint64_t seed = 0;
  int draws = 3;  // random matrices averaged in the denominator
  TreBudget budget;
  /// When set, used instead of sampled random matrices (control runs).
  std::optional<std::vector<nn::Tensor<float>>> override_random;
};

struct TreReport {
  double tre_train_attr = 0, tre_test_attr = 0;
  double tre_train_rand = 0, tre_test_rand = 0;  // averaged over draws
  double ratio = 0;                              // test TRE(attrs) / test TRE(random)
  std::vector<uint64_t> draw_seeds;
  bool denominator_flagged = false;
};

/// TRE ratio with eta fit independently (same budget, same train split) for
/// the attribute matrix and for density-matched random binary matrices.
TreReport tre_ratio(const nn::Tensor<float>& features_train,
                    const nn::Tensor<float>& features_test,
                    const nn::Tensor<float>& binary_attrs,  // [C, A]
                    const std::vector<int64_t>& labels_train,
                    const std::vector<int64_t>& labels_test, const TreRatioConfig& cfg = {});

/// Pearson correlation; throws on zero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b);
/// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace zfs::tre
