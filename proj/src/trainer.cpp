#include "zfs/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "zfs/tre.hpp"

namespace zfs::pretrain {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<int64_t> contiguous_train_ids(const data::DatasetBundle& bundle,
                                          std::vector<int64_t>* class_order) {
  std::vector<int64_t> classes = bundle.split.train_classes;
  std::sort(classes.begin(), classes.end());
  if (class_order) *class_order = classes;
  std::vector<int64_t> map(bundle.num_classes(), -1);
  for (size_t i = 0; i < classes.size(); ++i) map[classes[i]] = static_cast<int64_t>(i);
  return map;
}

/// Two images per class so that CMDIM always has intra-class candidates.
std::vector<int64_t> sample_class_paired_batch(
    const std::vector<std::vector<int64_t>>& by_class, int64_t batch, nn::Rng& rng) {
  std::vector<int64_t> out;
  const int64_t pairs = batch / 2;
  for (int64_t p = 0; p < pairs; ++p) {
    const auto& members = by_class[rng.randint(static_cast<int64_t>(by_class.size()))];
    out.push_back(members[rng.randint(static_cast<int64_t>(members.size()))]);
    out.push_back(members[rng.randint(static_cast<int64_t>(members.size()))]);
  }
  return out;
}

nn::Tensor<float> horizontal_flip(const nn::Tensor<float>& im) {
  nn::Tensor<float> out(im.shape());
  const int64_t c = im.dim(0), h = im.dim(1), w = im.dim(2);
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        out[(ch * h + y) * w + x] = im[(ch * h + y) * w + (w - 1 - x)];
  return out;
}

/// AMDIM view augmentation: random crop (from preprocess), horizontal flip,
/// per-channel color jitter. Fixed set, seeded.
nn::Tensor<float> augment_view(const img::Image& raw, int resize_to, nn::Rng& rng) {
  nn::Tensor<float> t = data::preprocess(raw, /*train=*/true, rng, resize_to);
  if (rng.bernoulli(0.5)) t = horizontal_flip(t);
  const int64_t hw = t.dim(1) * t.dim(2);
  for (int64_t c = 0; c < 3; ++c) {
    const float scale = static_cast<float>(rng.uniform(0.8, 1.2));
    const float shift = static_cast<float>(rng.uniform(-0.1, 0.1));
    for (int64_t i = 0; i < hw; ++i) {
      float v = t[c * hw + i] * scale + shift;
      t[c * hw + i] = std::clamp(v, -1.f, 1.f);
    }
  }
  return t;
}

nn::Tensor<float> stack_batch(const std::vector<nn::Tensor<float>>& items) {
  const int64_t n = static_cast<int64_t>(items.size());
  nn::Shape s = items[0].shape();
  nn::Tensor<float> out({n, s[0], s[1], s[2]});
  const int64_t stride = items[0].numel();
  for (int64_t i = 0; i < n; ++i)
    std::copy(items[i].data(), items[i].data() + stride, out.data() + i * stride);
  return out;
}

}  // namespace

TrainedEncoder train_encoder(const TrainConfig& cfg, const data::DatasetBundle& bundle) {
  cfg.objective.validate();
  ZFS_CHECK(cfg.objective.kind != Objective::kBVAE || cfg.objective.beta > 1.0,
            "beta-VAE requires beta > 1");
  ZFS_CHECK(bundle.split.train_classes.size() >= 2, "training needs at least two train classes");
  const auto t0 = Clock::now();

  // ZFS rule: parameters come from the seed only; there is deliberately no
  // way to warm-start this driver from an external checkpoint.
  enc::Encoder<float> encoder(cfg.encoder, cfg.seed);
  std::vector<int64_t> class_order;
  const std::vector<int64_t> id_map = contiguous_train_ids(bundle, &class_order);
  const int64_t num_train_classes = static_cast<int64_t>(class_order.size());
  ObjectiveModel<float> model(cfg.objective, cfg.encoder, num_train_classes,
                              bundle.num_attributes(), cfg.seed + 1);

  // binarized attributes for AC targets
  nn::Tensor<float> bin_attrs;
  if (cfg.objective.local_loss == LocalLoss::kAC)
    bin_attrs = tre::binarize_attributes(bundle.attributes, bundle.split.train_classes);

  // attribute rows of train classes (PN prototypes), in contiguous order
  nn::Tensor<float> attrs_train({num_train_classes, bundle.num_attributes()});
  for (int64_t i = 0; i < num_train_classes; ++i)
    for (int64_t j = 0; j < bundle.num_attributes(); ++j)
      attrs_train.at2(i, j) = bundle.attributes.at2(class_order[i], j);

  const std::vector<int64_t> train_idx = bundle.indices_of_classes(bundle.split.train_classes);
  ZFS_CHECK(static_cast<int64_t>(train_idx.size()) >= cfg.batch,
            "train split smaller than one batch");
  std::vector<std::vector<int64_t>> by_class(bundle.num_classes());
  for (int64_t idx : train_idx) by_class[bundle.labels[idx]].push_back(idx);
  std::vector<std::vector<int64_t>> by_class_dense;
  for (auto& v : by_class)
    if (!v.empty()) by_class_dense.push_back(v);

  nn::ParamSet<float> main_params;
  for (auto& item : encoder.params().items) main_params.items.push_back(item);
  for (auto& item : model.params.items) main_params.items.push_back(item);
  nn::Adam<float> opt(cfg.lr);
  nn::Adam<float> disc_opt(cfg.lr);

  nn::Rng rng(cfg.seed);
  nn::Rng data_rng = rng.fork("data-order");
  nn::Rng aug_rng = rng.fork("augment");
  nn::Rng obj_rng = rng.fork("objective");

  std::ofstream loss_log;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    loss_log.open(cfg.out_dir + "/loss.tsv", std::ios::app);
  }
  auto log_value = [&](int64_t step, const std::string& name, double v) {
    if (loss_log.is_open()) loss_log << step << "\t" << name << "\t" << v << "\n";
  };

  std::vector<int64_t> epoch_order = train_idx;
  size_t epoch_pos = epoch_order.size();  // trigger shuffle on first use
  const bool paired_batches = cfg.objective.kind == Objective::kCMDIM;

  TrainResult result;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<int64_t> batch_idx;
    if (paired_batches) {
      batch_idx = sample_class_paired_batch(by_class_dense, cfg.batch, data_rng);
    } else {
      while (static_cast<int64_t>(batch_idx.size()) < cfg.batch) {
        if (epoch_pos >= epoch_order.size()) {
          data_rng.shuffle(epoch_order.begin(), epoch_order.end());
          epoch_pos = 0;
        }
        batch_idx.push_back(epoch_order[epoch_pos++]);
      }
    }
    const int64_t b = static_cast<int64_t>(batch_idx.size());

    std::vector<int64_t> labels_local(b);
    for (int64_t i = 0; i < b; ++i) {
      labels_local[i] = id_map[bundle.labels[batch_idx[i]]];
      ZFS_CHECK(labels_local[i] >= 0, "batch image label outside train classes");
    }

    std::vector<nn::Tensor<float>> items, items2;
    for (int64_t i = 0; i < b; ++i) {
      img::Image raw = bundle.images.get(batch_idx[i]);
      if (cfg.objective.kind == Objective::kAMDIM) {
        items.push_back(augment_view(raw, cfg.resize_to, aug_rng));
        items2.push_back(augment_view(raw, cfg.resize_to, aug_rng));
      } else {
        items.push_back(data::preprocess(raw, /*train=*/true, aug_rng, cfg.resize_to));
      }
    }
    nn::Tensor<float> batch = stack_batch(items);

    main_params.zero_grad();
    model.disc_params.zero_grad();

    std::map<std::string, double> losses;
    nn::Var<float> main_loss;
    nn::Var<float> disc_loss;
    enc::FeatureBundle<float> fb;

    switch (cfg.objective.kind) {
      case Objective::kFC: {
        fb = encoder.forward(batch, /*training=*/true);
        main_loss = supervised_loss(*model.fc_head, fb.global, labels_local);
        break;
      }
      case Objective::kVAE:
      case Objective::kBVAE: {
        fb = encoder.forward(batch, true);
        const double beta = cfg.objective.kind == Objective::kVAE ? 1.0 : cfg.objective.beta;
        VaeTerms<float> terms = vae_loss(*model.mu_head, *model.logvar_head, *model.decoder,
                                         fb.global, batch, beta, true, obj_rng);
        losses["recon"] = terms.recon.value()[0];
        losses["kl"] = terms.kl.value()[0];
        main_loss = terms.total;
        break;
      }
      case Objective::kAAE: {
        fb = encoder.forward(batch, true);
        AaeTerms<float> terms = aae_loss(*model.code_head, *model.decoder, *model.disc,
                                         fb.global, batch, true, obj_rng);
        losses["recon"] = terms.recon.value()[0];
        losses["gen"] = terms.gen.value()[0];
        losses["disc"] = terms.disc.value()[0];
        main_loss = nn::add(terms.recon, terms.gen);
        disc_loss = terms.disc;
        break;
      }
      case Objective::kDIM: {
        fb = encoder.forward(batch, true);
        PairingPlan plan = dim_pairing(b);
        main_loss = infomax_loss(*model.g_proj, *model.l_proj, fb.global, fb.local, plan,
                                 cfg.objective.resolved_estimator());
        break;
      }
      case Objective::kAMDIM: {
        nn::Tensor<float> batch2 = stack_batch(items2);
        fb = encoder.forward(batch, true);
        enc::FeatureBundle<float> fb2 = encoder.forward(batch2, true);
        PairingPlan plan = dim_pairing(b);
        nn::Var<float> l12 = infomax_loss(*model.g_proj, *model.l_proj, fb.global, fb2.local,
                                          plan, cfg.objective.resolved_estimator());
        nn::Var<float> l21 = infomax_loss(*model.g_proj, *model.l_proj, fb2.global, fb.local,
                                          plan, cfg.objective.resolved_estimator());
        main_loss = nn::mul_scalar(nn::add(l12, l21), 0.5f);
        break;
      }
      case Objective::kCMDIM: {
        fb = encoder.forward(batch, true);
        std::vector<int64_t> batch_labels(b);
        for (int64_t i = 0; i < b; ++i) batch_labels[i] = bundle.labels[batch_idx[i]];
        PairingPlan plan = cmdim_pairing(batch_labels, cfg.objective.match_prob, obj_rng);
        main_loss = infomax_loss(*model.g_proj, *model.l_proj, fb.global, fb.local, plan,
                                 cfg.objective.resolved_estimator());
        break;
      }
      case Objective::kPN: {
        fb = encoder.forward(batch, true);
        main_loss = prototypical_loss(*model.pn_img, *model.pn_attr, fb.global, attrs_train,
                                      labels_local);
        break;
      }
    }

    nn::Var<float> total = main_loss;
    if (cfg.objective.local_loss != LocalLoss::kNone) {
      nn::Tensor<float> attr_targets;
      if (cfg.objective.local_loss == LocalLoss::kAC) {
        attr_targets = nn::Tensor<float>({b, bundle.num_attributes()});
        for (int64_t i = 0; i < b; ++i)
          for (int64_t j = 0; j < bundle.num_attributes(); ++j)
            attr_targets.at2(i, j) = bin_attrs.at2(bundle.labels[batch_idx[i]], j);
      }
      nn::Var<float> aux = local_aux_loss(*model.local_head, fb.local,
                                          cfg.objective.local_loss, labels_local, attr_targets);
      losses["local"] = aux.value()[0];
      total = nn::add(total, nn::mul_scalar(aux, static_cast<float>(
                                                     cfg.objective.local_loss_weight)));
    }

    const double total_v = total.value()[0];
    losses["main"] = main_loss.value()[0];
    losses["total"] = total_v;
    ZFS_CHECK(std::isfinite(total_v), "non-finite loss at step " + std::to_string(step) +
                                          " (objective " + objective_name(cfg.objective.kind) +
                                          ")");

    nn::backward(total);
    opt.step(main_params);

    if (disc_loss.defined()) {
      // Discriminator phase: its graph segment is disjoint from the main
      // loss (the code is detached there), so a second sweep is safe.
      model.disc_params.zero_grad();
      nn::backward(disc_loss);
      disc_opt.step(model.disc_params);
    }

    if (step % cfg.log_every == 0 || step + 1 == cfg.steps)
      for (const auto& [name, v] : losses) log_value(step, name, v);
    result.last_losses = losses;
  }

  result.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!cfg.out_dir.empty()) {
    nlohmann::json prov;
    prov["objective"] = objective_name(cfg.objective.kind);
    prov["local_loss"] = local_loss_name(cfg.objective.local_loss);
    prov["dataset"] = bundle.name;
    prov["steps"] = cfg.steps;
    prov["batch"] = cfg.batch;
    prov["lr"] = cfg.lr;
    prov["resize_to"] = cfg.resize_to;
    prov["match_prob"] = cfg.objective.match_prob;
    prov["beta"] = cfg.objective.beta;
    prov["zfs"] = true;  // trained from seed-only initialization
    result.checkpoint_path = cfg.out_dir + "/encoder.ckpt";
    enc::save_checkpoint(result.checkpoint_path, encoder, cfg.seed, prov.dump());
  }
  return TrainedEncoder{std::move(encoder), std::move(result)};
}

FeatureSet extract_features(enc::Encoder<float>& encoder, const data::DatasetBundle& bundle,
                            const std::vector<int64_t>& indices, int resize_to, enc::Tap tap,
                            int64_t batch) {
  const bool was_trainable = encoder.trainable();
  encoder.set_trainable(false);
  FeatureSet out;
  out.geometry = geometry_at(encoder.spec(), tap);
  out.indices = indices;
  out.labels.reserve(indices.size());
  for (int64_t idx : indices) out.labels.push_back(bundle.labels[idx]);

  nn::Rng dummy(0);
  const int64_t n = static_cast<int64_t>(indices.size());
  for (int64_t start = 0; start < n; start += batch) {
    const int64_t stop = std::min(n, start + batch);
    std::vector<nn::Tensor<float>> items;
    for (int64_t i = start; i < stop; ++i)
      items.push_back(
          data::preprocess(bundle.images.get(indices[i]), /*train=*/false, dummy, resize_to));
    nn::Tensor<float> b = stack_batch(items);
    enc::FeatureBundle<float> fb = encoder.forward(b, /*training=*/false, tap);
    const nn::Tensor<float>& g = fb.global.value();
    const nn::Tensor<float>& l = fb.local.value();
    if (start == 0) {
      out.global = nn::Tensor<float>({n, g.dim(1)});
      out.local = nn::Tensor<float>({n, l.dim(1), l.dim(2), l.dim(3)});
    }
    std::copy(g.data(), g.data() + g.numel(), out.global.data() + start * g.dim(1));
    const int64_t lstride = l.dim(1) * l.dim(2) * l.dim(3);
    std::copy(l.data(), l.data() + l.numel(), out.local.data() + start * lstride);
  }
  encoder.set_trainable(was_trainable);
  return out;
}

nn::Tensor<float> local_mean_features(const FeatureSet& fs) {
  const int64_t n = fs.local.dim(0), c = fs.local.dim(1), m = fs.local.dim(2) * fs.local.dim(3);
  nn::Tensor<float> out({n, c});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      double acc = 0;
      const float* src = fs.local.data() + (i * c + ch) * m;
      for (int64_t j = 0; j < m; ++j) acc += src[j];
      out.at2(i, ch) = static_cast<float>(acc / m);
    }
  return out;
}

nn::Tensor<float> local_cell_rows(const nn::Tensor<float>& local, int64_t image_row) {
  const int64_t c = local.dim(1), m = local.dim(2) * local.dim(3);
  nn::Tensor<float> out({m, c});
  for (int64_t ch = 0; ch < c; ++ch) {
    const float* src = local.data() + (image_row * c + ch) * m;
    for (int64_t j = 0; j < m; ++j) out.at2(j, ch) = src[j];
  }
  return out;
}

}  // namespace zfs::pretrain
