#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "testutil.hpp"
#include "zfs/tre.hpp"

using namespace zfs;

TEST_CASE("binarize_attributes") {
  // already-binary matrix is unchanged under strict mean thresholding
  nn::Tensor<float> bin({4, 3});
  bin.at2(0, 0) = 1;
  bin.at2(1, 1) = 1;
  bin.at2(2, 0) = 1;
  bin.at2(2, 2) = 1;
  bin.at2(3, 2) = 1;
  std::vector<uint8_t> flagged;
  nn::Tensor<float> out = tre::binarize_attributes(bin, {0, 1, 2, 3}, &flagged);
  for (int64_t i = 0; i < bin.numel(); ++i) REQUIRE(out[i] == bin[i]);
  for (auto f : flagged) REQUIRE(f == 0);

  // constant column comes back all-false and flagged
  nn::Tensor<float> cons({3, 2});
  cons.at2(0, 0) = cons.at2(1, 0) = cons.at2(2, 0) = 0.7f;
  cons.at2(1, 1) = 0.9f;
  out = tre::binarize_attributes(cons, {0, 1, 2}, &flagged);
  CHECK(flagged[0] == 1);
  CHECK(flagged[1] == 0);
  for (int64_t i = 0; i < 3; ++i) CHECK(out.at2(i, 0) == 0.f);

  // brute-force fixture: threshold computed over train classes only
  nn::Tensor<float> m({3, 1});
  m.at2(0, 0) = 0.2f;
  m.at2(1, 0) = 0.8f;
  m.at2(2, 0) = 0.45f;  // test class, mean over {0,1} is 0.5
  out = tre::binarize_attributes(m, {0, 1}, nullptr);
  CHECK(out.at2(0, 0) == 0.f);
  CHECK(out.at2(1, 0) == 1.f);
  CHECK(out.at2(2, 0) == 0.f);
}

TEST_CASE("tre value closed forms") {
  // identical vectors: distance 0
  nn::Tensor<float> eta({1, 3});
  eta.at2(0, 0) = 1;
  eta.at2(0, 2) = 2;
  nn::Tensor<float> feats({2, 3});
  feats.at2(0, 0) = 1;
  feats.at2(0, 2) = 2;
  feats.at2(1, 0) = 2;
  feats.at2(1, 2) = 4;  // same direction, double scale
  nn::Tensor<float> dmat = nn::Tensor<float>::full({2, 1}, 1.f);
  CHECK(tre::tre_value(eta, feats, dmat) == doctest::Approx(0.0).epsilon(1e-6));

  // orthogonal composition: distance 1 per point
  nn::Tensor<float> orth({2, 2});
  orth.at2(0, 0) = 1;
  orth.at2(1, 0) = 1;
  nn::Tensor<float> oeta({1, 2});
  oeta.at2(0, 1) = 1;
  nn::Tensor<float> od = nn::Tensor<float>::full({2, 1}, 1.f);
  CHECK(tre::tre_value(oeta, orth, od) == doctest::Approx(1.0).epsilon(1e-6));

  // fixture vs manual cosine computation
  nn::Tensor<float> f({1, 2});
  f.at2(0, 0) = 3;
  f.at2(0, 1) = 4;
  nn::Tensor<float> e2({2, 2});
  e2.at2(0, 0) = 1;
  e2.at2(1, 1) = 1;
  nn::Tensor<float> d2 = nn::Tensor<float>::full({1, 2}, 1.f);  // composition = (1,1)
  const double cosine = (3 + 4) / (5.0 * std::sqrt(2.0));
  CHECK(tre::tre_value(e2, f, d2) == doctest::Approx(1.0 - cosine).epsilon(1e-6));
}

TEST_CASE("fit_tre drives exact-sum constructions to ~0") {
  nn::Rng rng(1);
  const int64_t n = 40, a = 5, d = 16;
  nn::Tensor<float> true_eta = rng.gaussian_tensor<float>({a, d}, 1.0);
  nn::Tensor<float> dmat({n, a});
  for (int64_t i = 0; i < n; ++i) {
    int64_t k = 0;
    while (k == 0) {
      for (int64_t j = 0; j < a; ++j) dmat.at2(i, j) = rng.bernoulli(0.4) ? 1.f : 0.f;
      k = 0;
      for (int64_t j = 0; j < a; ++j) k += dmat.at2(i, j) > 0;
    }
  }
  nn::Tensor<float> feats = nn::matmul_raw(dmat, true_eta);
  tre::TreBudget budget;
  budget.max_steps = 2500;
  budget.lr = 2e-2;
  tre::TreFit<float> fit = tre::fit_tre(feats, dmat, 0, budget);
  CHECK(fit.tre < 1e-3);
  CHECK(fit.excluded == 0);

  // single datapoint, single attribute: the one free vector aligns exactly
  nn::Tensor<float> one_f = rng.gaussian_tensor<float>({1, 8}, 1.0);
  nn::Tensor<float> one_d = nn::Tensor<float>::full({1, 1}, 1.f);
  tre::TreFit<float> fit1 = tre::fit_tre(one_f, one_d, 0, budget);
  CHECK(fit1.tre < 1e-4);
}

TEST_CASE("fit_tre beats a dense random search on a small fixture") {
  nn::Rng rng(5);
  nn::Tensor<float> feats = rng.gaussian_tensor<float>({3, 4}, 1.0);
  nn::Tensor<float> dmat({3, 2});
  dmat.at2(0, 0) = 1;
  dmat.at2(1, 1) = 1;
  dmat.at2(2, 0) = 1;
  dmat.at2(2, 1) = 1;
  tre::TreBudget budget;
  budget.max_steps = 2000;
  budget.lr = 2e-2;
  tre::TreFit<float> fit = tre::fit_tre(feats, dmat, 0, budget);

  double best_random = std::numeric_limits<double>::infinity();
  nn::Rng search(7);
  for (int trial = 0; trial < 3000; ++trial) {
    nn::Tensor<float> eta = search.gaussian_tensor<float>({2, 4}, 1.0);
    best_random = std::min(best_random, tre::tre_value(eta, feats, dmat));
  }
  CHECK(fit.tre <= best_random + 1e-6);
}

TEST_CASE("fit_tre objective properties") {
  nn::Rng rng(9);
  nn::Tensor<float> feats = rng.gaussian_tensor<float>({20, 8}, 1.0);
  nn::Tensor<float> dmat({20, 4});
  for (int64_t i = 0; i < 20; ++i) dmat.at2(i, i % 4) = 1;
  dmat.at2(5, 2) = 1;

  // objective at the returned eta is <= objective at initialization
  nn::Rng init_rng(0);
  nn::Rng init = init_rng.fork("tre-init");
  nn::Tensor<float> eta0 = init.gaussian_tensor<float>({4, 8}, 0.01);
  const double at_init = tre::tre_value(eta0, feats, dmat);
  tre::TreFit<float> fit = tre::fit_tre(feats, dmat, 0);
  CHECK(fit.tre <= at_init);

  // recorded curve is monotone non-increasing within tolerance (Adam shows
  // small early transients on the cosine objective) and decreases overall
  for (size_t i = 1; i < fit.curve.size(); ++i)
    CHECK(fit.curve[i] <= fit.curve[i - 1] + 0.05);
  CHECK(fit.curve.back() < fit.curve.front());

  // scale invariance of the tre value (cosine distance)
  nn::Tensor<float> scaled = feats;
  for (int64_t i = 0; i < scaled.numel(); ++i) scaled[i] *= 37.5f;
  CHECK(tre::tre_value(fit.eta, scaled, dmat) ==
        doctest::Approx(tre::tre_value(fit.eta, feats, dmat)).epsilon(1e-5));

  // datapoint order invariance with a frozen eta
  nn::Tensor<float> rev_f(feats.shape());
  nn::Tensor<float> rev_d(dmat.shape());
  for (int64_t i = 0; i < 20; ++i) {
    for (int64_t j = 0; j < 8; ++j) rev_f.at2(i, j) = feats.at2(19 - i, j);
    for (int64_t j = 0; j < 4; ++j) rev_d.at2(i, j) = dmat.at2(19 - i, j);
  }
  CHECK(tre::tre_value(fit.eta, rev_f, rev_d) ==
        doctest::Approx(tre::tre_value(fit.eta, feats, dmat)).epsilon(1e-6));

  // rows with empty attribute sets are excluded and counted
  nn::Tensor<float> dempty = dmat;
  for (int64_t j = 0; j < 4; ++j) dempty.at2(3, j) = 0;
  int64_t excluded = 0;
  tre::tre_value(fit.eta, feats, dempty, &excluded);
  CHECK(excluded == 1);
}

TEST_CASE("fit_tre gradients match finite differences at 64-bit") {
  nn::Rng rng(13);
  nn::Tensor<double> feats = rng.gaussian_tensor<double>({6, 5}, 1.0);
  nn::Tensor<double> dmat({6, 3});
  for (int64_t i = 0; i < 6; ++i) dmat.at2(i, i % 3) = 1;
  dmat.at2(2, 0) = 1;
  std::vector<nn::Var<double>> params = {
      nn::parameter(rng.gaussian_tensor<double>({3, 5}, 0.5))};
  auto build = [&](std::vector<nn::Var<double>>& p) {
    return tre::tre_objective(p[0], feats, dmat);
  };
  CHECK(test::max_rel_grad_error(params, build) < 1e-3);
}

TEST_CASE("tre_ratio control: identical matrices give exactly 1") {
  nn::Rng rng(17);
  const int64_t c = 8, a = 6, per = 5, d = 12;
  nn::Tensor<float> bin({c, a});
  for (int64_t i = 0; i < c; ++i) {
    bin.at2(i, i % a) = 1;
    bin.at2(i, (i + 2) % a) = 1;
  }
  std::vector<int64_t> labels_tr, labels_te;
  nn::Tensor<float> ftr({c * per, d}), fte({c * 2, d});
  for (int64_t i = 0; i < c; ++i) {
    for (int64_t k = 0; k < per; ++k) labels_tr.push_back(i);
    for (int64_t k = 0; k < 2; ++k) labels_te.push_back(i);
  }
  for (int64_t i = 0; i < ftr.numel(); ++i) ftr[i] = static_cast<float>(rng.gaussian());
  for (int64_t i = 0; i < fte.numel(); ++i) fte[i] = static_cast<float>(rng.gaussian());

  tre::TreRatioConfig cfg;
  cfg.budget.max_steps = 300;
  cfg.override_random = std::vector<nn::Tensor<float>>{bin};
  tre::TreReport rep = tre::tre_ratio(ftr, fte, bin, labels_tr, labels_te, cfg);
  CHECK(rep.ratio == 1.0);  // bitwise-identical fits on both sides
  CHECK(rep.tre_test_attr == rep.tre_test_rand);
}
