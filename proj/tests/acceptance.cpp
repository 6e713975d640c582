// Acceptance suite: one test case per criterion, each printing one PASS/FAIL
// line per clause. Criterion 9 (paper-scale anchors) is long-running and
// opt-in via ZFS_PAPER_SCALE=1 + ZFS_DATA_ROOT.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "testutil.hpp"
#include "zfs/mine.hpp"
#include "zfs/parts_probes.hpp"
#include "zfs/protonet.hpp"
#include "zfs/synthetic.hpp"
#include "zfs/tre.hpp"
#include "zfs/trainer.hpp"

using namespace zfs;

namespace {

bool report(int criterion, const char* what, bool ok) {
  std::printf("[criterion %d] %s — %s\n", criterion, ok ? "PASS" : "FAIL", what);
  std::fflush(stdout);
  return ok;
}

// ---- desk-scale experiment constants (shared by criteria 4 and 5) ----

data::SyntheticSpec desk_spec() {
  data::SyntheticSpec spec;
  spec.num_classes = 72;
  spec.num_attributes = 16;
  spec.image_size = 48;
  spec.glyph_size = 11;
  spec.images_per_class = 20;
  spec.num_test_classes = 6;
  spec.min_true = 1;  // singleton classes anchor per-attribute structure
  spec.max_true = 4;
  spec.seed = 0;
  return spec;
}

constexpr int kDeskResize = 48;  // crop 42, encoder input 42

const data::DatasetBundle& desk_bundle() {
  static data::DatasetBundle bundle = data::generate_synthetic(desk_spec());
  return bundle;
}

/// Evaluation protocol used for the desk-scale ZSL numbers: prototypical
/// model over location-averaged local representations with linear embedders
/// (sum-structured prototypes transfer on strictly compositional data).
zsl::EvalOptions desk_eval_options(uint64_t seed) {
  zsl::EvalOptions opts;
  opts.kind = zsl::FeatureKind::kAverageRepresentations;
  opts.resize_to = kDeskResize;
  opts.proto.steps = 4000;
  opts.proto.lr = 1e-3;
  opts.proto.embed_dim = 128;
  opts.proto.img_hidden_layers = 0;
  opts.proto.attr_hidden_layers = 0;
  opts.proto.seed = seed;
  return opts;
}

pretrain::TrainConfig desk_train_config(pretrain::Objective obj, pretrain::LocalLoss ll,
                                        int64_t steps) {
  pretrain::TrainConfig cfg;
  cfg.objective.kind = obj;
  cfg.objective.local_loss = ll;
  if (obj == pretrain::Objective::kBVAE) cfg.objective.beta = 4.0;
  cfg.objective.match_prob = 1.0;
  cfg.objective.latent_dim = 32;
  cfg.encoder = enc::EncoderSpec::basic(42);
  cfg.resize_to = kDeskResize;
  cfg.steps = steps;
  cfg.batch = 16;
  cfg.lr = 3e-4;
  cfg.seed = 0;
  return cfg;
}

double desk_parts_f1(enc::Encoder<float>& frozen, const data::DatasetBundle& bundle) {
  auto train_idx = bundle.indices_of_classes(bundle.split.train_classes);
  auto test_idx = bundle.indices_of_classes(bundle.split.test_classes);
  auto ftr = pretrain::extract_features(frozen, bundle, train_idx, kDeskResize);
  auto fte = pretrain::extract_features(frozen, bundle, test_idx, kDeskResize);
  auto maps_tr = probes::projected_maps_for(bundle, train_idx, ftr.geometry, kDeskResize);
  auto maps_te = probes::projected_maps_for(bundle, test_idx, fte.geometry, kDeskResize);
  probes::ProbeConfig pcfg;
  pcfg.steps = 600;
  pcfg.lr = 1e-3;
  probes::PartProbeSet set = probes::train_part_probes(ftr.local, maps_tr, pcfg);
  return probes::parts_f1(set, fte.local, maps_te).mean_f1;
}

mi::MineSampler gaussian_pairs(double rho, int64_t pool, uint64_t seed) {
  auto g = std::make_shared<std::vector<float>>();
  auto l = std::make_shared<std::vector<float>>();
  nn::Rng rng(seed);
  for (int64_t i = 0; i < pool; ++i) {
    const double x = rng.gaussian();
    const double y = rho * x + std::sqrt(1.0 - rho * rho) * rng.gaussian();
    g->push_back(static_cast<float>(x));
    l->push_back(static_cast<float>(y));
  }
  return [g, l, pool](int64_t batch, nn::Rng& r) {
    mi::MineBatch out;
    out.g_joint = nn::Tensor<float>({batch, 1});
    out.l_joint = nn::Tensor<float>({batch, 1});
    out.g_marg = nn::Tensor<float>({batch, 1});
    out.l_marg = nn::Tensor<float>({batch, 1});
    for (int64_t i = 0; i < batch; ++i) {
      const int64_t a = r.randint(pool);
      out.g_joint[i] = (*g)[a];
      out.l_joint[i] = (*l)[a];
      int64_t b = r.randint(pool - 1);
      if (b >= a) ++b;
      out.g_marg[i] = (*g)[a];
      out.l_marg[i] = (*l)[b];
    }
    return out;
  };
}

}  // namespace

TEST_CASE("criterion 1: MINE analytic oracle on correlated Gaussians") {
  // analytic MI of rho = 0.9 bivariate Gaussians: -0.5 ln(1 - rho^2)
  const double analytic = 0.8303805;
  mi::StatisticsNetwork net(1, 1, 128, 0);
  mi::MineConfig cfg;
  cfg.steps = 2500;
  cfg.batch = 512;
  cfg.lr = 1e-3;
  cfg.seed = 0;
  const double est = mi::train_mine(net, gaussian_pairs(0.9, 8192, 1), cfg, 8192);
  CHECK(report(1, "Eq.-1 bound within 15% of 0.8304 nats on rho=0.9 Gaussians",
               std::abs(est - analytic) <= 0.15 * analytic));

  mi::StatisticsNetwork inet(1, 1, 128, 0);
  const double ind = mi::train_mine(inet, gaussian_pairs(0.0, 8192, 2), cfg, 16384);
  CHECK(report(1, "|bound| <= 0.05 on shuffled (independent) pairs", std::abs(ind) <= 0.05));
}

TEST_CASE("criterion 2: CMDIM pairing statistics") {
  nn::Rng rng(0);
  for (double p : {0.1, 0.5, 1.0}) {
    int64_t intra = 0, anchors = 0;
    bool cross_class_positive = false;
    while (anchors < 100000) {
      // batches of 8 classes x 4 instances: every anchor has siblings
      std::vector<int64_t> labels;
      for (int64_t c = 0; c < 8; ++c)
        for (int i = 0; i < 4; ++i) labels.push_back(c);
      rng.shuffle(labels.begin(), labels.end());
      auto plan = pretrain::cmdim_pairing(labels, p, rng);
      for (size_t i = 0; i < labels.size(); ++i) {
        intra += plan.intra_class[i];
        cross_class_positive =
            cross_class_positive || labels[plan.positive[i]] != labels[i];
      }
      anchors += static_cast<int64_t>(labels.size());
    }
    const double frac = static_cast<double>(intra) / anchors;
    char what[128];
    std::snprintf(what, sizeof(what), "intra-class fraction %.4f within 0.01 of p=%.1f", frac,
                  p);
    CHECK(report(2, what, std::abs(frac - p) <= 0.01));
    CHECK(report(2, "zero cross-class positives", !cross_class_positive));
  }
}

TEST_CASE("criterion 3: TRE oracle suite") {
  nn::Rng rng(3);
  const int64_t c = 24, a = 12, per = 8, d = 24;
  nn::Tensor<float> bin({c, a});
  for (int64_t i = 0; i < c; ++i) {
    bin.at2(i, i % a) = 1;
    bin.at2(i, (i * 5 + 2) % a) = 1;
    bin.at2(i, (i * 7 + 5) % a) = 1;
  }
  std::vector<int64_t> labels_tr, labels_te;
  for (int64_t i = 0; i < c; ++i) {
    for (int64_t k = 0; k < per; ++k) labels_tr.push_back(i);
    for (int64_t k = 0; k < 3; ++k) labels_te.push_back(i);
  }
  nn::Tensor<float> basis = rng.gaussian_tensor<float>({a, d}, 1.0);
  auto exact_features = [&](const std::vector<int64_t>& labels) {
    nn::Tensor<float> f({static_cast<int64_t>(labels.size()), d});
    for (size_t i = 0; i < labels.size(); ++i)
      for (int64_t k = 0; k < d; ++k) {
        double acc = 0;
        for (int64_t j = 0; j < a; ++j)
          if (bin.at2(labels[i], j) > 0) acc += basis.at2(j, k);
        f.at2(static_cast<int64_t>(i), k) = static_cast<float>(acc);
      }
    return f;
  };
  nn::Tensor<float> ftr = exact_features(labels_tr);
  nn::Tensor<float> fte = exact_features(labels_te);

  tre::TreRatioConfig cfg;
  cfg.seed = 0;
  cfg.draws = 3;
  cfg.budget.max_steps = 2500;
  cfg.budget.lr = 2e-2;
  tre::TreReport exact = tre::tre_ratio(ftr, fte, bin, labels_tr, labels_te, cfg);
  CHECK(report(3, "exact-sum features: train TRE < 1e-3", exact.tre_train_attr < 1e-3));
  CHECK(report(3, "exact-sum features: TRE ratio < 0.2", exact.ratio < 0.2));

  // noise features: both sides fit equally badly, ratio near 1 (3 draws)
  nn::Tensor<float> ntr = rng.gaussian_tensor<float>({static_cast<int64_t>(labels_tr.size()), d},
                                                     1.0);
  nn::Tensor<float> nte = rng.gaussian_tensor<float>({static_cast<int64_t>(labels_te.size()), d},
                                                     1.0);
  tre::TreReport noise = tre::tre_ratio(ntr, nte, bin, labels_tr, labels_te, cfg);
  char what[96];
  std::snprintf(what, sizeof(what), "noise features: ratio %.4f in [0.9, 1.1]", noise.ratio);
  CHECK(report(3, what, noise.ratio >= 0.9 && noise.ratio <= 1.1));

  // control: identical matrices on both sides give exactly 1
  tre::TreRatioConfig control = cfg;
  control.override_random = std::vector<nn::Tensor<float>>{bin};
  tre::TreReport ctrl = tre::tre_ratio(ntr, nte, bin, labels_tr, labels_te, control);
  CHECK(report(3, "a-hat == a-tilde control: ratio exactly 1", ctrl.ratio == 1.0));
}

TEST_CASE("criterion 4: synthetic end-to-end zero-shot transfer") {
  const data::DatasetBundle& bundle = desk_bundle();
  const double chance = 1.0 / static_cast<double>(bundle.split.test_classes.size());
  const int64_t n_test =
      static_cast<int64_t>(bundle.indices_of_classes(bundle.split.test_classes).size());
  const double ci_half = 2.576 * std::sqrt(chance * (1 - chance) / static_cast<double>(n_test));

  auto trained = pretrain::train_encoder(
      desk_train_config(pretrain::Objective::kFC, pretrain::LocalLoss::kNone, 1800), bundle);
  trained.encoder.set_trainable(false);
  zsl::ZslResult fc = zsl::zsl_eval(trained.encoder, bundle, desk_eval_options(0));
  char what[128];
  std::snprintf(what, sizeof(what), "FC-pretrained encoder + protonet top-1 %.4f >= 0.90",
                fc.top1);
  CHECK(report(4, what, fc.top1 >= 0.90));

  enc::Encoder<float> random_encoder(enc::EncoderSpec::basic(42), 777);
  random_encoder.set_trainable(false);
  zsl::ZslResult rnd = zsl::zsl_eval(random_encoder, bundle, desk_eval_options(0));
  std::snprintf(what, sizeof(what),
                "random frozen encoder top-1 %.4f within 99%% CI of chance [%.4f, %.4f]",
                rnd.top1, chance - ci_half, chance + ci_half);
  CHECK(report(4, what, rnd.top1 >= chance - ci_half && rnd.top1 <= chance + ci_half));
}

TEST_CASE("criterion 5: directional reproduction of the ZSL/locality ordering") {
  const data::DatasetBundle& bundle = desk_bundle();
  struct Variant {
    const char* name;
    pretrain::Objective obj;
    pretrain::LocalLoss ll;
  };
  const std::vector<Variant> variants = {
      {"fc", pretrain::Objective::kFC, pretrain::LocalLoss::kNone},
      {"fc+ac", pretrain::Objective::kFC, pretrain::LocalLoss::kAC},
      {"vae", pretrain::Objective::kVAE, pretrain::LocalLoss::kNone},
      {"dim", pretrain::Objective::kDIM, pretrain::LocalLoss::kNone},
      {"amdim", pretrain::Objective::kAMDIM, pretrain::LocalLoss::kNone},
      {"cmdim(p=1)", pretrain::Objective::kCMDIM, pretrain::LocalLoss::kNone},
      {"cmdim(p=1)+ac", pretrain::Objective::kCMDIM, pretrain::LocalLoss::kAC},
  };
  std::map<std::string, double> zsl_top1, f1_of;
  std::vector<double> f1s, accs;
  for (const auto& v : variants) {
    auto trained = pretrain::train_encoder(desk_train_config(v.obj, v.ll, 500), bundle);
    trained.encoder.set_trainable(false);
    zsl::ZslResult res = zsl::zsl_eval(trained.encoder, bundle, desk_eval_options(0));
    const double f1 = desk_parts_f1(trained.encoder, bundle);
    zsl_top1[v.name] = res.top1;
    f1_of[v.name] = f1;
    f1s.push_back(f1);
    accs.push_back(res.top1);
    std::printf("[criterion 5] variant %-14s zsl_top1 %.4f parts_f1 %.4f\n", v.name, res.top1,
                f1);
    std::fflush(stdout);
  }
  char what[160];
  std::snprintf(what, sizeof(what), "FC (%.3f) beats VAE (%.3f) by >= 10 points",
                zsl_top1["fc"], zsl_top1["vae"]);
  CHECK(report(5, what, zsl_top1["fc"] >= zsl_top1["vae"] + 0.10));
  std::snprintf(what, sizeof(what), "CMDIM p=1 (%.3f) beats VAE (%.3f) by >= 10 points",
                zsl_top1["cmdim(p=1)"], zsl_top1["vae"]);
  CHECK(report(5, what, zsl_top1["cmdim(p=1)"] >= zsl_top1["vae"] + 0.10));
  const double rho = tre::spearman(f1s, accs);
  std::snprintf(what, sizeof(what),
                "Spearman(parts-F1, ZSL top-1) = %.3f positive across %zu variants", rho,
                variants.size());
  CHECK(report(5, what, rho > 0));
}

TEST_CASE("criterion 6: geometry oracles") {
  // receptive-field arithmetic against paper-pinned values
  enc::FeatureGeometry basic_tap = geometry_at(enc::EncoderSpec::basic(112), enc::Tap::kLocal);
  enc::FeatureGeometry pre = geometry_at(enc::EncoderSpec::alexnet(112), enc::Tap::kPrePool);
  enc::FeatureGeometry post = geometry_at(enc::EncoderSpec::alexnet(112), enc::Tap::kPostPool);
  CHECK(report(6, "basic third-conv tap rf 22 px, jump 8",
               basic_tap.rf == 22 && basic_tap.jump == 8));
  CHECK(report(6, "alexnet taps report 65/85 px exactly", pre.rf == 65 && post.rf == 85));

  // pixel-perturbation brute force for both families: pointwise ops do not
  // change dependency structure, and a huge positive perturbation always
  // survives max pooling, so changed cells == predicted windows
  auto brute_force_ok = [](const enc::EncoderSpec& spec, enc::Tap tap, int pixels,
                           uint64_t seed) {
    const int64_t s = spec.input_size;
    enc::FeatureGeometry geom = geometry_at(spec, tap);
    nn::Rng rng(seed);
    nn::Tensor<float> image({1, 3, s, s});
    for (int64_t i = 0; i < image.numel(); ++i)
      image[i] = 0.1f + 0.4f * static_cast<float>(rng.uniform());
    auto probe = [&](const nn::Tensor<float>& x) {
      nn::Rng wrng(42);
      auto blks = spec.blocks();
      int64_t last_pool = -1;
      for (int64_t i = 0; i < static_cast<int64_t>(blks.size()); ++i)
        if (blks[i].has_pool) last_pool = i;
      nn::Tensor<float> h = x;
      int64_t in_ch = 3;
      for (int64_t i = 0; i < static_cast<int64_t>(blks.size()); ++i) {
        const auto& b = blks[i];
        nn::Tensor<float> w = wrng.gaussian_tensor<float>({b.out_ch, in_ch, b.k, b.k}, 1.0);
        for (int64_t j = 0; j < w.numel(); ++j) w[j] = std::abs(w[j]) + 0.05f;
        h = nn::conv2d_raw(h, w, nn::Tensor<float>(), b.s, b.p);
        if (tap == enc::Tap::kPrePool && i == last_pool) return h;
        if (b.has_pool) h = nn::maxpool2d_raw(h, b.pool_k, b.pool_s, nullptr);
        if (tap == enc::Tap::kLocal && i == spec.local_tap) return h;
        if (tap == enc::Tap::kPostPool && i == last_pool) return h;
        in_ch = b.out_ch;
      }
      throw std::runtime_error("tap unreachable");
    };
    nn::Tensor<float> base = probe(image);
    for (int p = 0; p < pixels; ++p) {
      const int64_t py = rng.randint(s), px = rng.randint(s);
      nn::Tensor<float> pert = image;
      pert.at4(0, 0, py, px) += 1e5f;
      nn::Tensor<float> out = probe(pert);
      for (int64_t fy = 0; fy < geom.h; ++fy)
        for (int64_t fx = 0; fx < geom.w; ++fx) {
          auto [y0, y1] = geom.window(fy, s);
          auto [x0, x1] = geom.window(fx, s);
          const bool inside = py >= y0 && py <= y1 && px >= x0 && px <= x1;
          bool changed = false;
          for (int64_t ch = 0; ch < base.dim(1) && !changed; ++ch)
            changed = std::abs(out.at4(0, ch, fy, fx) - base.at4(0, ch, fy, fx)) >
                      1e-3f * std::abs(base.at4(0, ch, fy, fx));
          if (changed != inside) return false;
        }
    }
    return true;
  };
  CHECK(report(6, "basic receptive windows match pixel perturbation",
               brute_force_ok(enc::EncoderSpec::basic(56), enc::Tap::kLocal, 10, 1)));
  CHECK(report(6, "alexnet receptive windows match pixel perturbation (local/pre/post)",
               brute_force_ok(enc::EncoderSpec::alexnet(56), enc::Tap::kLocal, 6, 2) &&
                   brute_force_ok(enc::EncoderSpec::alexnet(56), enc::Tap::kPrePool, 4, 3) &&
                   brute_force_ok(enc::EncoderSpec::alexnet(56), enc::Tap::kPostPool, 4, 4)));

  // part-map projection vs brute-force window enumeration on 50 fixtures
  enc::EncoderSpec bspec = enc::EncoderSpec::basic(42);
  enc::FeatureGeometry geom = geometry_at(bspec, enc::Tap::kLocal);
  std::vector<enc::Stage> stages;
  for (int64_t i = 0; i <= bspec.local_tap; ++i) {
    auto b = bspec.blocks()[i];
    stages.push_back({b.k, b.s, b.p});
  }
  auto compose_window = [&](int64_t cell, int64_t input) {
    int64_t lo = cell, hi = cell;
    for (auto it = stages.rbegin(); it != stages.rend(); ++it) {
      lo = lo * it->s - it->p;
      hi = hi * it->s - it->p + it->k - 1;
    }
    return std::pair<int64_t, int64_t>{std::max<int64_t>(0, lo), std::min(input - 1, hi)};
  };
  nn::Rng rng(9);
  bool projection_ok = true;
  for (int trial = 0; trial < 50 && projection_ok; ++trial) {
    data::PartMaps maps(1, 42, 42);
    for (int p = 0; p < 4; ++p)
      maps.at(0, static_cast<int>(rng.randint(42)), static_cast<int>(rng.randint(42))) = 1;
    data::PartMaps proj = data::project_part_maps(maps, geom, 42, 42);
    for (int fy = 0; fy < proj.h && projection_ok; ++fy)
      for (int fx = 0; fx < proj.w && projection_ok; ++fx) {
        auto [y0, y1] = compose_window(fy, 42);
        auto [x0, x1] = compose_window(fx, 42);
        bool any = false;
        for (int64_t y = y0; y <= y1; ++y)
          for (int64_t x = x0; x <= x1; ++x)
            any = any || maps.at(0, static_cast<int>(y), static_cast<int>(x));
        projection_ok = proj.at(0, fy, fx) == (any ? 1 : 0);
      }
  }
  CHECK(report(6, "part-map projection matches brute-force enumeration on 50 fixtures",
               projection_ok));
}

TEST_CASE("criterion 7: gradient checks at 64-bit") {
  nn::Rng rng(5);
  // local auxiliary loss (both kinds) against central finite differences
  nn::Tensor<double> attr_targets({2, 3});
  attr_targets.at2(0, 1) = 1;
  attr_targets.at2(1, 0) = 1;
  std::vector<nn::Var<double>> params = {
      nn::parameter(rng.gaussian_tensor<double>({2, 4, 2, 2}, 0.7)),
      nn::parameter(rng.gaussian_tensor<double>({3, 4}, 0.7)),
      nn::parameter(rng.gaussian_tensor<double>({3}, 0.2))};
  auto lc = [&](std::vector<nn::Var<double>>& p) {
    nn::Linear<double> head;
    head.w = p[1];
    head.b = p[2];
    return pretrain::local_aux_loss(head, p[0], pretrain::LocalLoss::kLC, {1, 0},
                                    nn::Tensor<double>());
  };
  auto ac = [&](std::vector<nn::Var<double>>& p) {
    nn::Linear<double> head;
    head.w = p[1];
    head.b = p[2];
    return pretrain::local_aux_loss(head, p[0], pretrain::LocalLoss::kAC, {}, attr_targets);
  };
  const double lc_err = test::max_rel_grad_error(params, lc);
  const double ac_err = test::max_rel_grad_error(params, ac);
  CHECK(report(7, "local_aux_loss (LC and AC) matches finite differences at rel tol 1e-3",
               lc_err < 1e-3 && ac_err < 1e-3));

  nn::Tensor<double> feats = rng.gaussian_tensor<double>({6, 5}, 1.0);
  nn::Tensor<double> dmat({6, 3});
  for (int64_t i = 0; i < 6; ++i) dmat.at2(i, i % 3) = 1;
  std::vector<nn::Var<double>> eta = {nn::parameter(rng.gaussian_tensor<double>({3, 5}, 0.5))};
  auto tre_obj = [&](std::vector<nn::Var<double>>& p) {
    return tre::tre_objective(p[0], feats, dmat);
  };
  const double tre_err = test::max_rel_grad_error(eta, tre_obj);
  CHECK(report(7, "fit_tre objective matches finite differences at rel tol 1e-3",
               tre_err < 1e-3));
}

TEST_CASE("criterion 8: heatmap invariants") {
  nn::Rng rng(11);
  mi::StatisticsNetwork net(6, 6, 32, 3);
  nn::Tensor<float> g = rng.gaussian_tensor<float>({6}, 1.0);
  nn::Tensor<float> grid = rng.gaussian_tensor<float>({6, 5, 5}, 1.0);
  mi::PMIHeatmap map = mi::pmi_heatmap(net, g, grid);
  double sum = 0;
  bool nonneg = true;
  for (double v : map.normalized) {
    sum += v;
    nonneg = nonneg && v >= 0;
  }
  CHECK(report(8, "normalized PMI heatmap sums to 1 within 1e-6",
               nonneg && std::abs(sum - 1.0) <= 1e-6));

  bool shift_ok = true;
  for (double c : {-50.0, 0.25, 19.0}) {
    std::vector<double> shifted = map.raw;
    for (double& v : shifted) v += c;
    auto renorm = mi::normalize_scores(shifted);
    for (size_t i = 0; i < renorm.size(); ++i)
      shift_ok = shift_ok && std::abs(renorm[i] - map.normalized[i]) <= 1e-9;
  }
  CHECK(report(8, "softmax normalization is shift-invariant to 1e-9", shift_ok));

  // uniform heatmap: parts ratio is exactly 1
  mi::StatisticsNetwork zero_net(2, 2, 8, 0);
  for (auto& [name, v] : zero_net.params.items) v.value().fill(0.f);
  mi::PMIHeatmap uniform = mi::pmi_heatmap(zero_net, nn::Tensor<float>({2}),
                                           nn::Tensor<float>({2, 7, 7}));
  std::vector<uint8_t> part(49, 0);
  part[3] = part[10] = part[24] = part[31] = part[40] = 1;
  CHECK(report(8, "uniform heatmap gives parts_ratio exactly 1",
               mi::parts_ratio(uniform, part) == 1.0));
}

TEST_CASE("criterion 9: paper-scale anchors (optional, long-running)") {
  const char* enabled = std::getenv("ZFS_PAPER_SCALE");
  const char* root = std::getenv("ZFS_DATA_ROOT");
  if (!enabled || std::string(enabled) != "1" || !root) {
    std::printf(
        "[criterion 9] SKIP — paper-scale anchors (CUB top-1 27.44±3.0, parts-F1 0.198/0.406, "
        "TRE ratio 0.761±0.08) require ZFS_PAPER_SCALE=1 and ZFS_DATA_ROOT with the CUB "
        "layout; GPU-days budget, excluded from CI\n");
    return;
  }
  data::DatasetBundle bundle = data::load_zsl_dataset(std::string(root) + "/CUB", "CUB");
  auto cfg = desk_train_config(pretrain::Objective::kFC, pretrain::LocalLoss::kNone, 200000);
  cfg.encoder = enc::EncoderSpec::basic(112);
  cfg.resize_to = 128;
  cfg.batch = 64;
  cfg.lr = 1e-4;
  auto trained = pretrain::train_encoder(cfg, bundle);
  trained.encoder.set_trainable(false);
  zsl::EvalOptions opts;
  opts.resize_to = 128;
  opts.proto.steps = 20000;
  zsl::ZslResult res = zsl::zsl_eval(trained.encoder, bundle, opts);
  char what[128];
  std::snprintf(what, sizeof(what), "CUB/basic/FC/Normal top-1 %.2f within 27.44 +- 3.0",
                100.0 * res.top1);
  CHECK(report(9, what, std::abs(100.0 * res.top1 - 27.44) <= 3.0));
}
