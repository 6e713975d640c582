#include "zfs/tre.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace zfs::tre {

nn::Tensor<float> binarize_attributes(const nn::Tensor<float>& attrs,
                                      const std::vector<int64_t>& train_classes,
                                      std::vector<uint8_t>* constant_flagged) {
  ZFS_CHECK(attrs.ndim() == 2, "binarize_attributes needs a matrix");
  ZFS_CHECK(!train_classes.empty(), "binarize_attributes needs train classes");
  const int64_t c = attrs.dim(0), a = attrs.dim(1);
  if (constant_flagged) constant_flagged->assign(static_cast<size_t>(a), 0);
  nn::Tensor<float> out({c, a});
  for (int64_t j = 0; j < a; ++j) {
    double mean = 0;
    for (int64_t t : train_classes) mean += attrs.at2(t, j);
    mean /= static_cast<double>(train_classes.size());
    bool constant = true;
    for (int64_t t : train_classes)
      if (attrs.at2(t, j) != attrs.at2(train_classes[0], j)) constant = false;
    if (constant && constant_flagged) (*constant_flagged)[static_cast<size_t>(j)] = 1;
    for (int64_t i = 0; i < c; ++i)
      out.at2(i, j) = static_cast<double>(attrs.at2(i, j)) > mean ? 1.f : 0.f;
  }
  return out;
}

namespace {

nn::Tensor<float> dmat_from_labels(const nn::Tensor<float>& binary_attrs,
                                   const std::vector<int64_t>& labels) {
  const int64_t a = binary_attrs.dim(1);
  nn::Tensor<float> d({static_cast<int64_t>(labels.size()), a});
  for (size_t i = 0; i < labels.size(); ++i) {
    ZFS_CHECK(labels[i] >= 0 && labels[i] < binary_attrs.dim(0), "label outside attribute matrix");
    for (int64_t j = 0; j < a; ++j)
      d.at2(static_cast<int64_t>(i), j) = binary_attrs.at2(labels[i], j);
  }
  return d;
}

/// Random binary matrix with each column's density matched to the reference.
nn::Tensor<float> density_matched_random(const nn::Tensor<float>& ref, nn::Rng& rng) {
  const int64_t c = ref.dim(0), a = ref.dim(1);
  nn::Tensor<float> out({c, a});
  std::vector<int64_t> order(c);
  for (int64_t j = 0; j < a; ++j) {
    int64_t count = 0;
    for (int64_t i = 0; i < c; ++i) count += ref.at2(i, j) > 0 ? 1 : 0;
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    for (int64_t k = 0; k < count; ++k) out.at2(order[k], j) = 1.f;
  }
  return out;
}

}  // namespace

TreReport tre_ratio(const nn::Tensor<float>& features_train,
                    const nn::Tensor<float>& features_test,
                    const nn::Tensor<float>& binary_attrs,
                    const std::vector<int64_t>& labels_train,
                    const std::vector<int64_t>& labels_test, const TreRatioConfig& cfg) {
  TreReport rep;
  nn::Rng rng(cfg.seed);
  nn::Rng draw_rng = rng.fork("tre-random-matrix");
  // One fitting seed shared by numerator and denominator so that identical
  // assignment matrices give bitwise-identical fits.
  const uint64_t fit_seed = cfg.seed;

  nn::Tensor<float> d_train = dmat_from_labels(binary_attrs, labels_train);
  nn::Tensor<float> d_test = dmat_from_labels(binary_attrs, labels_test);
  TreFit<float> fit_attr = fit_tre(features_train, d_train, fit_seed, cfg.budget);
  rep.tre_train_attr = fit_attr.tre;
  rep.tre_test_attr = tre_value(fit_attr.eta, features_test, d_test);

  std::vector<nn::Tensor<float>> randoms;
  if (cfg.override_random) {
    randoms = *cfg.override_random;
  } else {
    for (int k = 0; k < cfg.draws; ++k) {
      uint64_t s = draw_rng.next_u64();
      rep.draw_seeds.push_back(s);
      nn::Rng r(s);
      randoms.push_back(density_matched_random(binary_attrs, r));
    }
  }
  ZFS_CHECK(!randoms.empty(), "tre_ratio needs at least one random matrix");

  double train_sum = 0, test_sum = 0;
  for (const auto& rm : randoms) {
    nn::Tensor<float> rd_train = dmat_from_labels(rm, labels_train);
    nn::Tensor<float> rd_test = dmat_from_labels(rm, labels_test);
    TreFit<float> fit_rand = fit_tre(features_train, rd_train, fit_seed, cfg.budget);
    train_sum += fit_rand.tre;
    test_sum += tre_value(fit_rand.eta, features_test, rd_test);
  }
  rep.tre_train_rand = train_sum / static_cast<double>(randoms.size());
  rep.tre_test_rand = test_sum / static_cast<double>(randoms.size());
  rep.denominator_flagged = rep.tre_test_rand < 1e-9;
  ZFS_CHECK(!rep.denominator_flagged, "tre ratio undefined: denominator TRE is ~0");
  rep.ratio = rep.tre_test_attr / rep.tre_test_rand;
  return rep;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  ZFS_CHECK(a.size() == b.size() && a.size() >= 3, "pearson needs >= 3 paired points");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  ZFS_CHECK(saa > 0 && sbb > 0, "pearson undefined: zero variance series");
  return sab / std::sqrt(saa * sbb);
}

namespace {
std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
  std::vector<double> r(v.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}
}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

}  // namespace zfs::tre
