#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "zfs/parts_probes.hpp"
#include "zfs/tre.hpp"

using namespace zfs;

namespace {

struct ProbeFixture {
  nn::Tensor<float> locals;               // [N,C,h,w]
  std::vector<data::PartMaps> projected;  // per image
};

/// Locals whose channel p literally contains part p's boolean map (plus a
/// few noise channels): linearly separable by construction.
ProbeFixture planted_fixture(int64_t n, int parts, int h, int w, double plant_strength,
                             uint64_t seed) {
  nn::Rng rng(seed);
  const int64_t c = parts + 3;
  ProbeFixture f;
  f.locals = rng.gaussian_tensor<float>({n, c, h, w}, 1.0);
  for (int64_t i = 0; i < n; ++i) {
    data::PartMaps maps(parts, h, w);
    for (int p = 0; p < parts; ++p)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const bool on = rng.bernoulli(0.2);
          maps.at(p, y, x) = on;
          f.locals.at4(i, p, y, x) = static_cast<float>(
              plant_strength * (on ? 1.0 : -1.0) + 0.1 * rng.gaussian());
        }
    f.projected.push_back(std::move(maps));
  }
  return f;
}

}  // namespace

TEST_CASE("planted maps reach F1 ~ 1, noise features stay near the chance baseline") {
  ProbeFixture planted = planted_fixture(24, 4, 5, 5, 3.0, 1);
  probes::ProbeConfig cfg;
  cfg.steps = 500;
  cfg.lr = 1e-2;
  probes::PartProbeSet set = probes::train_part_probes(planted.locals, planted.projected, cfg);
  probes::PartsF1 f1 = probes::parts_f1(set, planted.locals, planted.projected);
  CHECK(f1.mean_f1 > 0.95);

  // random features: F1 lands near the prevalence-determined baseline of an
  // uninformed positive-leaning predictor, far below the planted case
  ProbeFixture noise = planted_fixture(24, 4, 5, 5, 0.0, 2);
  probes::PartProbeSet nset = probes::train_part_probes(noise.locals, noise.projected, cfg);
  probes::PartsF1 nf1 = probes::parts_f1(nset, noise.locals, noise.projected);
  const double p = 0.2;
  const double baseline = 2 * p / (1 + p);  // all-positive predictor F1
  CHECK(nf1.mean_f1 < baseline + 0.12);
  CHECK(nf1.mean_f1 < f1.mean_f1 - 0.4);
}

TEST_CASE("zero-positive parts score 0 and are flagged") {
  nn::Rng rng(3);
  nn::Tensor<float> locals = rng.gaussian_tensor<float>({6, 4, 3, 3}, 1.0);
  std::vector<data::PartMaps> maps;
  for (int i = 0; i < 6; ++i) {
    data::PartMaps m(2, 3, 3);
    for (int y = 0; y < 3; ++y) m.at(0, y, y) = 1;  // part 0 present, part 1 never
    maps.push_back(m);
  }
  probes::ProbeConfig cfg;
  cfg.steps = 50;
  probes::PartProbeSet set = probes::train_part_probes(locals, maps, cfg);
  probes::PartsF1 f1 = probes::parts_f1(set, locals, maps);
  CHECK(f1.zero_positive_flag[1] == 1);
  CHECK(f1.per_part[1] == 0.0);
  CHECK(f1.zero_positive_flag[0] == 0);
}

TEST_CASE("a constant-negative predictor scores F1 = 0 on parts with positives") {
  ProbeFixture f = planted_fixture(8, 3, 4, 4, 1.0, 4);
  probes::ProbeConfig cfg;
  cfg.steps = 1;
  probes::PartProbeSet set = probes::train_part_probes(f.locals, f.projected, cfg);
  set.head.w.value().fill(0.f);
  for (int64_t i = 0; i < set.head.b.numel(); ++i) set.head.b.value()[i] = -10.f;
  probes::PartsF1 f1 = probes::parts_f1(set, f.locals, f.projected);
  for (double v : f1.per_part) CHECK(v == 0.0);
}

TEST_CASE("F1 is invariant to image traversal order") {
  ProbeFixture f = planted_fixture(10, 3, 4, 4, 2.0, 5);
  probes::ProbeConfig cfg;
  cfg.steps = 120;
  probes::PartProbeSet set = probes::train_part_probes(f.locals, f.projected, cfg);
  probes::PartsF1 a = probes::parts_f1(set, f.locals, f.projected);

  // permute the evaluation set
  std::vector<int64_t> perm = {9, 3, 0, 7, 5, 1, 8, 2, 6, 4};
  nn::Tensor<float> shuffled(f.locals.shape());
  std::vector<data::PartMaps> smaps;
  const int64_t stride = f.locals.numel() / f.locals.dim(0);
  for (size_t i = 0; i < perm.size(); ++i) {
    std::copy(f.locals.data() + perm[i] * stride, f.locals.data() + (perm[i] + 1) * stride,
              shuffled.data() + static_cast<int64_t>(i) * stride);
    smaps.push_back(f.projected[perm[i]]);
  }
  probes::PartsF1 b = probes::parts_f1(set, shuffled, smaps);
  for (size_t p = 0; p < a.per_part.size(); ++p)
    CHECK(a.per_part[p] == doctest::Approx(b.per_part[p]).epsilon(1e-12));
}

TEST_CASE("pearson and spearman correlation math") {
  // identical (but varying) series: r = 1
  std::vector<double> a = {1, 2, 3, 5};
  CHECK(tre::pearson(a, a) == doctest::Approx(1.0));
  // anti-monotone: spearman -1
  std::vector<double> b = {9, 7, 4, 1};
  CHECK(tre::spearman(a, b) == doctest::Approx(-1.0));
  // fixture against the covariance formula computed by hand
  std::vector<double> x = {1, 2, 4}, y = {1, 3, 2};
  // means 7/3, 2; cov = (1-7/3)(1-2)+(2-7/3)(3-2)+(4-7/3)(2-2) = 4/3-1/3 = 1
  // var_x = (4/3)^2+(1/3)^2+(5/3)^2 = 42/9 ; var_y = 1+1+0 = 2
  const double want = 1.0 / std::sqrt((42.0 / 9.0) * 2.0);
  CHECK(tre::pearson(x, y) == doctest::Approx(want).epsilon(1e-12));

  CHECK_THROWS_AS(tre::pearson({1, 2}, {1, 2}), std::runtime_error);
  CHECK_THROWS_WITH_AS(tre::pearson({1, 1, 1}, {1, 2, 3}), doctest::Contains("zero variance"),
                       std::runtime_error);
}
