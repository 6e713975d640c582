#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "zfs/protonet.hpp"
#include "zfs/synthetic.hpp"

using namespace zfs;

namespace {

/// Features built as noisy attribute sums: separable by construction.
struct Fixture {
  nn::Tensor<float> feats;
  std::vector<int64_t> labels;
  nn::Tensor<float> attrs;  // normalized rows
  std::vector<int64_t> train_classes, test_classes;
};

struct SplitViews {
  nn::Tensor<float> train_f, test_f;
  std::vector<int64_t> train_l, test_l;
};

SplitViews split_rows(const Fixture& f) {
  SplitViews v;
  std::vector<int64_t> tr, te;
  std::set<int64_t> test_set(f.test_classes.begin(), f.test_classes.end());
  for (size_t i = 0; i < f.labels.size(); ++i)
    (test_set.count(f.labels[i]) ? te : tr).push_back(i);
  const int64_t d = f.feats.dim(1);
  v.train_f = nn::Tensor<float>({(int64_t)tr.size(), d});
  v.test_f = nn::Tensor<float>({(int64_t)te.size(), d});
  for (size_t i = 0; i < tr.size(); ++i) {
    std::copy(f.feats.data() + tr[i] * d, f.feats.data() + (tr[i] + 1) * d,
              v.train_f.data() + (int64_t)i * d);
    v.train_l.push_back(f.labels[tr[i]]);
  }
  for (size_t i = 0; i < te.size(); ++i) {
    std::copy(f.feats.data() + te[i] * d, f.feats.data() + (te[i] + 1) * d,
              v.test_f.data() + (int64_t)i * d);
    v.test_l.push_back(f.labels[te[i]]);
  }
  return v;
}

Fixture compositional_fixture(int64_t classes, int64_t attrs_n, int64_t per_class, int64_t dim,
                              double noise, uint64_t seed) {
  nn::Rng rng(seed);
  Fixture f;
  f.attrs = nn::Tensor<float>({classes, attrs_n});
  for (int64_t c = 0; c < classes; ++c) {
    int64_t k = 0;
    while (k < 2) {  // at least two attributes per class
      for (int64_t j = 0; j < attrs_n; ++j)
        if (rng.bernoulli(0.3)) {
          f.attrs.at2(c, j) = 1;
        }
      k = 0;
      for (int64_t j = 0; j < attrs_n; ++j) k += f.attrs.at2(c, j) > 0;
    }
  }
  nn::Tensor<float> basis = rng.gaussian_tensor<float>({attrs_n, dim}, 1.0);
  f.feats = nn::Tensor<float>({classes * per_class, dim});
  for (int64_t c = 0; c < classes; ++c)
    for (int64_t i = 0; i < per_class; ++i) {
      const int64_t row = c * per_class + i;
      f.labels.push_back(c);
      for (int64_t d = 0; d < dim; ++d) {
        double acc = noise * rng.gaussian();
        for (int64_t j = 0; j < attrs_n; ++j)
          if (f.attrs.at2(c, j) > 0) acc += basis.at2(j, d);
        f.feats.at2(row, d) = static_cast<float>(acc);
      }
    }
  data::normalize_attribute_rows(f.attrs);
  for (int64_t c = 0; c < classes; ++c)
    (c < classes - 3 ? f.train_classes : f.test_classes).push_back(c);
  return f;
}

}  // namespace

TEST_CASE("protonet fits separable compositional features") {
  Fixture f = compositional_fixture(10, 8, 12, 32, 0.05, 1);
  SplitViews v = split_rows(f);
  zsl::ProtoConfig cfg;
  cfg.steps = 400;
  cfg.lr = 1e-3;
  zsl::ProtoModel model =
      zsl::fit_protonet(v.train_f, v.train_l, f.attrs, f.train_classes, cfg);

  // training accuracy over the train classes
  auto probs = zsl::class_probabilities(model, v.train_f, f.attrs, model.train_classes);
  int64_t correct = 0, total = 0;
  for (int64_t i = 0; i < probs.dim(0); ++i) {
    double best = -1;
    int64_t bc = -1;
    for (size_t j = 0; j < model.train_classes.size(); ++j)
      if (probs.at2(i, j) > best) {
        best = probs.at2(i, j);
        bc = model.train_classes[j];
      }
    correct += bc == v.train_l[i];
    ++total;
  }
  CHECK(static_cast<double>(correct) / total > 0.95);

  // unseen transfer is far above chance on this linear construction
  zsl::ZslResult res2 = zsl::predict_zsl(model, v.test_f, v.test_l, f.attrs, f.test_classes);
  CHECK(res2.top1 > 0.6);
}

TEST_CASE("degenerate and deterministic protonet cases") {
  Fixture f = compositional_fixture(6, 5, 4, 16, 0.1, 2);
  SplitViews v = split_rows(f);
  zsl::ProtoConfig cfg;
  cfg.steps = 30;

  CHECK_THROWS_WITH_AS(zsl::fit_protonet(v.train_f, v.train_l, f.attrs, {0}, cfg),
                       doctest::Contains("degenerate"), std::runtime_error);

  zsl::ProtoModel m1 = zsl::fit_protonet(v.train_f, v.train_l, f.attrs, f.train_classes, cfg);
  zsl::ProtoModel m2 = zsl::fit_protonet(v.train_f, v.train_l, f.attrs, f.train_classes, cfg);
  for (size_t p = 0; p < m1.params.items.size(); ++p)
    for (int64_t i = 0; i < m1.params.items[p].second.numel(); ++i)
      REQUIRE(m1.params.items[p].second.value()[i] == m2.params.items[p].second.value()[i]);

  // unseen classes must be disjoint from training classes
  CHECK_THROWS_AS(zsl::predict_zsl(m1, v.test_f, v.test_l, f.attrs, {0, 5}),
                  std::runtime_error);
}

TEST_CASE("nearest-prototype ties break to the lowest class index") {
  Fixture f = compositional_fixture(8, 6, 4, 16, 0.1, 3);
  zsl::ProtoConfig cfg;
  cfg.steps = 20;
  // rows of classes 0..3 only
  std::vector<int64_t> rows, lbl;
  for (size_t i = 0; i < f.labels.size(); ++i)
    if (f.labels[i] <= 3) {
      rows.push_back(i);
      lbl.push_back(f.labels[i]);
    }
  nn::Tensor<float> sub({(int64_t)rows.size(), f.feats.dim(1)});
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(f.feats.data() + rows[i] * f.feats.dim(1),
              f.feats.data() + (rows[i] + 1) * f.feats.dim(1),
              sub.data() + (int64_t)i * f.feats.dim(1));
  zsl::ProtoModel model = zsl::fit_protonet(sub, lbl, f.attrs, {0, 1, 2, 3}, cfg);
  // two unseen classes with identical attribute rows => identical prototypes
  nn::Tensor<float> attrs = f.attrs;
  for (int64_t j = 0; j < attrs.dim(1); ++j) attrs.at2(7, j) = attrs.at2(6, j);
  nn::Tensor<float> one({1, f.feats.dim(1)});
  std::copy(f.feats.data(), f.feats.data() + f.feats.dim(1), one.data());
  zsl::ZslResult res = zsl::predict_zsl(model, one, {6}, attrs, {7, 6});
  CHECK(res.predictions[0] == 6);
}

TEST_CASE("prediction invariance under unseen-class permutation") {
  Fixture f = compositional_fixture(9, 7, 5, 24, 0.05, 4);
  SplitViews v = split_rows(f);
  zsl::ProtoConfig cfg;
  cfg.steps = 120;
  zsl::ProtoModel model =
      zsl::fit_protonet(v.train_f, v.train_l, f.attrs, f.train_classes, cfg);
  zsl::ZslResult a = zsl::predict_zsl(model, v.test_f, v.test_l, f.attrs, {6, 7, 8});
  zsl::ZslResult b = zsl::predict_zsl(model, v.test_f, v.test_l, f.attrs, {8, 6, 7});
  CHECK(a.predictions == b.predictions);
}

TEST_CASE("random features transfer at chance") {
  nn::Rng rng(5);
  const int64_t classes = 8, per = 40, dim = 32;
  nn::Tensor<float> feats = rng.gaussian_tensor<float>({classes * per, dim}, 1.0);
  std::vector<int64_t> labels;
  nn::Tensor<float> attrs({classes, 6});
  for (int64_t c = 0; c < classes; ++c) {
    for (int64_t j = 0; j < 6; ++j) attrs.at2(c, j) = rng.bernoulli(0.5) ? 1.f : 0.f;
    attrs.at2(c, c % 6) = 1.f;  // no zero rows
    for (int64_t i = 0; i < per; ++i) labels.push_back(c);
  }
  data::normalize_attribute_rows(attrs);
  zsl::ProtoConfig cfg;
  cfg.steps = 300;
  nn::Tensor<float> trf({4 * per, dim});
  std::vector<int64_t> trl;
  for (int64_t c = 0; c < 4; ++c)
    for (int64_t i = 0; i < per; ++i) {
      const int64_t row = c * per + i;
      std::copy(feats.data() + row * dim, feats.data() + (row + 1) * dim,
                trf.data() + (int64_t)trl.size() * dim);
      trl.push_back(c);
    }
  zsl::ProtoModel model = zsl::fit_protonet(trf, trl, attrs, {0, 1, 2, 3}, cfg);
  nn::Tensor<float> te({4 * per, dim});
  std::vector<int64_t> te_labels;
  for (int64_t c = 4; c < 8; ++c)
    for (int64_t i = 0; i < per; ++i) {
      const int64_t row = c * per + i;
      std::copy(feats.data() + row * dim, feats.data() + (row + 1) * dim,
                te.data() + static_cast<int64_t>(te_labels.size()) * dim);
      te_labels.push_back(c);
    }
  zsl::ZslResult res = zsl::predict_zsl(model, te, te_labels, attrs, {4, 5, 6, 7});
  // 99% binomial band around chance 0.25 with n = 160
  const double half = 2.576 * std::sqrt(0.25 * 0.75 / static_cast<double>(te_labels.size()));
  CHECK(res.top1 > 0.25 - half - 0.05);
  CHECK(res.top1 < 0.25 + half + 0.05);
}

TEST_CASE("local aggregation modes") {
  Fixture f = compositional_fixture(8, 6, 6, 16, 0.05, 7);
  SplitViews v = split_rows(f);
  zsl::ProtoConfig cfg;
  cfg.steps = 150;
  zsl::ProtoModel model =
      zsl::fit_protonet(v.train_f, v.train_l, f.attrs, f.train_classes, cfg);

  // constant local grid: both modes match the single-vector path
  const int64_t n = 4, c = f.feats.dim(1);
  nn::Tensor<float> locals({n, c, 2, 2});
  nn::Tensor<float> single({n, c});
  std::vector<int64_t> lbl(v.test_l.begin(), v.test_l.begin() + n);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      single.at2(i, ch) = v.test_f.at2(i, ch);
      for (int64_t s = 0; s < 4; ++s) locals[(i * c + ch) * 4 + s] = v.test_f.at2(i, ch);
    }
  auto plain = zsl::predict_zsl(model, single, lbl, f.attrs, f.test_classes);
  auto ar = zsl::predict_zsl_local(model, locals, lbl, f.attrs, f.test_classes,
                                   zsl::AggregateMode::kAverageRepresentations);
  auto ap = zsl::predict_zsl_local(model, locals, lbl, f.attrs, f.test_classes,
                                   zsl::AggregateMode::kAveragePredictions);
  CHECK(plain.predictions == ar.predictions);
  CHECK(plain.predictions == ap.predictions);

  // 1x1 grid: average_representations equals the plain path bitwise
  nn::Tensor<float> locals1({n, c, 1, 1});
  for (int64_t i = 0; i < n * c; ++i) locals1[i] = single[i];
  auto ar1 = zsl::predict_zsl_local(model, locals1, lbl, f.attrs, f.test_classes,
                                    zsl::AggregateMode::kAverageRepresentations);
  CHECK(ar1.predictions == plain.predictions);
  CHECK(ar1.top1 == plain.top1);

  // 2x2 fixture: mode-B scores equal hand-averaged per-cell scores
  nn::Rng rng(8);
  nn::Tensor<float> grid = rng.gaussian_tensor<float>({1, c, 2, 2}, 1.0);
  nn::Tensor<float> cells = pretrain::local_cell_rows(grid, 0);
  nn::Tensor<float> probs = zsl::class_probabilities(model, cells, f.attrs, f.test_classes);
  std::vector<double> hand(f.test_classes.size(), 0);
  for (int64_t cell = 0; cell < 4; ++cell)
    for (size_t j = 0; j < f.test_classes.size(); ++j)
      hand[j] += probs.at2(cell, static_cast<int64_t>(j)) / 4.0;
  size_t best = 0;
  for (size_t j = 1; j < hand.size(); ++j)
    if (hand[j] > hand[best]) best = j;
  auto pred = zsl::predict_zsl_local(model, grid, {f.test_classes[best]}, f.attrs,
                                     f.test_classes, zsl::AggregateMode::kAveragePredictions);
  CHECK(pred.predictions[0] == f.test_classes[best]);
}

TEST_CASE("zsl_eval enforces the frozen-encoder contract") {
  data::SyntheticSpec spec;
  spec.num_classes = 12;
  spec.num_attributes = 8;
  spec.image_size = 40;
  spec.glyph_size = 9;
  spec.images_per_class = 4;
  spec.num_test_classes = 3;
  spec.min_true = 1;
  spec.max_true = 2;
  data::DatasetBundle bundle = data::generate_synthetic(spec);
  enc::Encoder<float> encoder(enc::EncoderSpec::basic(32), 0);

  zsl::EvalOptions opts;
  opts.resize_to = 37;
  opts.proto.steps = 40;
  CHECK_THROWS_WITH_AS(zsl::zsl_eval(encoder, bundle, opts),
                       doctest::Contains("frozen"), std::runtime_error);

  encoder.set_trainable(false);
  const uint64_t before = encoder.state_checksum();
  zsl::ZslResult res = zsl::zsl_eval(encoder, bundle, opts);
  CHECK(encoder.state_checksum() == before);
  CHECK(res.top1 >= 0.0);
  CHECK(res.top1 <= 1.0);

  // aggregation variants run end to end on the same frozen encoder
  opts.kind = zsl::FeatureKind::kAverageRepresentations;
  zsl::ZslResult ar = zsl::zsl_eval(encoder, bundle, opts);
  CHECK(encoder.state_checksum() == before);
  CHECK(ar.per_class.size() == 3);
}

TEST_CASE("argmin predictions are invariant to a positive scaling of the embedded space") {
  Fixture f = compositional_fixture(8, 6, 5, 16, 0.05, 11);
  SplitViews v = split_rows(f);
  zsl::ProtoConfig cfg;
  cfg.steps = 80;
  zsl::ProtoModel model =
      zsl::fit_protonet(v.train_f, v.train_l, f.attrs, f.train_classes, cfg);
  zsl::ZslResult base = zsl::predict_zsl(model, v.test_f, v.test_l, f.attrs, f.test_classes);

  // scaling both embedder outputs by c scales every squared distance by c^2
  const float c = 7.25f;
  for (auto* lin : {&model.img_emb.mlp.l2, &model.attr_emb.mlp.l2}) {
    for (int64_t i = 0; i < lin->w.numel(); ++i) lin->w.value()[i] *= c;
    for (int64_t i = 0; i < lin->b.numel(); ++i) lin->b.value()[i] *= c;
  }
  zsl::ZslResult scaled = zsl::predict_zsl(model, v.test_f, v.test_l, f.attrs, f.test_classes);
  CHECK(base.predictions == scaled.predictions);
  CHECK(base.top1 == scaled.top1);
}

TEST_CASE("pre/post-pool evaluation paths run end to end on the alexnet family") {
  data::SyntheticSpec spec;
  spec.num_classes = 16;
  spec.num_attributes = 8;
  spec.image_size = 52;
  spec.glyph_size = 11;
  spec.images_per_class = 3;
  spec.num_test_classes = 3;
  spec.min_true = 1;
  spec.max_true = 2;
  data::DatasetBundle bundle = data::generate_synthetic(spec);

  enc::Encoder<float> encoder(enc::EncoderSpec::alexnet(48), 0);
  encoder.set_trainable(false);
  for (auto tap : {enc::Tap::kPrePool, enc::Tap::kPostPool}) {
    zsl::EvalOptions opts;
    opts.tap = tap;
    opts.kind = zsl::FeatureKind::kAverageRepresentations;
    opts.resize_to = 55;  // crop 48
    opts.proto.steps = 25;
    zsl::ZslResult res = zsl::zsl_eval(encoder, bundle, opts);
    CHECK(res.per_class.size() == 3);
    CHECK(res.top1 >= 0.0);
  }

  // taps are rejected for the pool-free basic family
  enc::Encoder<float> basic(enc::EncoderSpec::basic(42), 0);
  basic.set_trainable(false);
  zsl::EvalOptions opts;
  opts.tap = enc::Tap::kPrePool;
  opts.resize_to = 48;
  CHECK_THROWS_WITH_AS(zsl::zsl_eval(basic, bundle, opts), doctest::Contains("tap absent"),
                       std::runtime_error);
}
