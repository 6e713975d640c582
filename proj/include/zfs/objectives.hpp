#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zfs/encoder.hpp"
#include "zfs/nn/layers.hpp"

namespace zfs::pretrain {

enum class Objective { kFC, kVAE, kBVAE, kAAE, kDIM, kAMDIM, kCMDIM, kPN };
enum class LocalLoss { kNone, kAC, kLC };
enum class MiEstimator { kDV, kNCE };

std::string objective_name(Objective o);
Objective objective_from_name(const std::string& s);
std::string local_loss_name(LocalLoss l);
LocalLoss local_loss_from_name(const std::string& s);

/// DIM/CMDIM use the Donsker-Varadhan bound; AMDIM uses the multi-sample
/// contrastive softmax bound.
MiEstimator default_estimator(Objective o);

struct ObjectiveConfig {
  Objective kind = Objective::kFC;
  double beta = 1.0;         // KL weight; 1 for VAE, >1 for beta-VAE
  double match_prob = 1.0;   // CMDIM intra-class matching probability p
  LocalLoss local_loss = LocalLoss::kNone;
  double local_loss_weight = 1.0;
  std::optional<MiEstimator> estimator;  // default per kind when unset
  int64_t latent_dim = 64;
  int64_t mi_dim = 128;

  MiEstimator resolved_estimator() const {
    return estimator ? *estimator : default_estimator(kind);
  }
  void validate() const;
};

/// Positive/negative assignment for one batch of the infomax objectives.
struct PairingPlan {
  std::vector<int64_t> positive;                // per-anchor source index
  std::vector<std::vector<int64_t>> negatives;  // per-anchor negative indices
  std::vector<uint8_t> intra_class;             // positive came from another image
};

/// With probability p pick the positive uniformly among other same-class
/// batch members; otherwise (or for singleton classes) the anchor itself.
/// Negatives are the different-class batch members; anchors whose batch has
/// no other class fall back to all-other-inputs negatives.
PairingPlan cmdim_pairing(const std::vector<int64_t>& labels, double p, nn::Rng& rng);

/// DIM: self positives, all-other-input negatives.
PairingPlan dim_pairing(int64_t batch_size);

// ---- decoder (VAE / AAE reconstruction path) ----

/// Transposed-convolution ladder from the latent code back to [N,3,S,S] with
/// a tanh output, sized by halving S down to a small seed grid.
template <typename T>
struct Decoder {
  nn::Linear<T> fc;
  std::vector<nn::ConvTranspose2d<T>> deconvs;
  std::vector<nn::BatchNorm<T>> bns;
  int64_t seed_ch = 0, seed_side = 0;

  Decoder() = default;
  Decoder(nn::ParamSet<T>& ps, int64_t image_size, int64_t latent_dim, nn::Rng& rng) {
    std::vector<int64_t> chain{image_size};
    while (chain.back() > 4) chain.push_back(chain.back() / 2);
    std::reverse(chain.begin(), chain.end());
    seed_side = chain.front();
    const int64_t stages = static_cast<int64_t>(chain.size()) - 1;
    seed_ch = 512;
    fc = nn::Linear<T>(ps, "dec.fc", latent_dim, seed_ch * seed_side * seed_side, rng);
    int64_t in_ch = seed_ch;
    for (int64_t i = 0; i < stages; ++i) {
      const bool last = i + 1 == stages;
      const int64_t out_ch = last ? 3 : std::max<int64_t>(32, seed_ch >> (i + 1));
      const int64_t out_pad = chain[i + 1] - 2 * chain[i];  // 0 or 1 by construction
      deconvs.emplace_back(ps, "dec.t" + std::to_string(i), in_ch, out_ch, 4, 2, 1, out_pad,
                           rng);
      if (!last) bns.emplace_back(ps, "dec.t" + std::to_string(i) + ".bn", out_ch, true);
      in_ch = out_ch;
    }
  }

  nn::Var<T> forward(const nn::Var<T>& z, bool training) {
    const int64_t n = z.dim(0);
    nn::Var<T> x = nn::reshape(fc.forward(z), {n, seed_ch, seed_side, seed_side});
    for (size_t i = 0; i < deconvs.size(); ++i) {
      x = deconvs[i].forward(x);
      if (i + 1 < deconvs.size()) x = nn::relu(bns[i].forward(x, training));
    }
    return nn::tanh_(x);
  }
};

// ---- objective losses ----

template <typename T>
nn::Var<T> supervised_loss(const nn::Linear<T>& head, const nn::Var<T>& global,
                           const std::vector<int64_t>& labels) {
  return nn::softmax_cross_entropy(head.forward(global), labels);
}

/// Closed-form diagonal-Gaussian KL against the standard normal, averaged
/// over the batch (summed over latent dimensions).
template <typename T>
nn::Var<T> gaussian_kl(const nn::Var<T>& mu, const nn::Var<T>& logvar) {
  const int64_t n = mu.dim(0);
  // 0.5 * (mu^2 + exp(logvar) - 1 - logvar)
  nn::Var<T> term = nn::sub(nn::add(nn::square(mu), nn::exp_(logvar)),
                            nn::add_scalar(logvar, T(1)));
  return nn::mul_scalar(nn::sum_all(term), T(0.5) / static_cast<T>(n));
}

template <typename T>
struct VaeTerms {
  nn::Var<T> total, recon, kl;
};

/// Log-variance is clamped to [-8, 8] so the KL cannot overflow.
template <typename T>
VaeTerms<T> vae_loss(const nn::Linear<T>& mu_head, const nn::Linear<T>& logvar_head,
                     Decoder<T>& decoder, const nn::Var<T>& global,
                     const nn::Tensor<T>& target_images, double beta, bool training,
                     nn::Rng& rng) {
  nn::Var<T> mu = mu_head.forward(global);
  nn::Var<T> logvar = nn::clamp(logvar_head.forward(global), T(-8), T(8));
  nn::Var<T> std = nn::exp_(nn::mul_scalar(logvar, T(0.5)));
  nn::Var<T> z = mu;
  if (training) {
    nn::Tensor<T> eps = rng.template gaussian_tensor<T>(mu.shape(), 1.0);
    z = nn::add(mu, nn::mul(std, nn::constant(eps)));
  }
  VaeTerms<T> out;
  out.recon = nn::mse_loss(decoder.forward(z, training), target_images);
  out.kl = gaussian_kl(mu, logvar);
  out.total = nn::add(out.recon, nn::mul_scalar(out.kl, static_cast<T>(beta)));
  return out;
}

template <typename T>
struct AaeTerms {
  nn::Var<T> recon, gen, disc;
};

/// Reconstruction plus adversarial code-prior matching. The discriminator
/// loss uses a detached code; generator and discriminator parts are returned
/// separately so the trainer can drive separate optimizers.
template <typename T>
AaeTerms<T> aae_loss(const nn::Linear<T>& code_head, Decoder<T>& decoder,
                     const nn::Mlp<T>& disc, const nn::Var<T>& global,
                     const nn::Tensor<T>& target_images, bool training, nn::Rng& rng) {
  nn::Var<T> code = code_head.forward(global);
  AaeTerms<T> out;
  out.recon = nn::mse_loss(decoder.forward(code, training), target_images);
  const int64_t n = code.dim(0), z = code.dim(1);
  nn::Tensor<T> prior = rng.template gaussian_tensor<T>({n, z}, 1.0);
  nn::Var<T> d_real = disc.forward(nn::constant(prior));
  nn::Var<T> d_fake_detached = disc.forward(code.detach());
  nn::Tensor<T> ones = nn::Tensor<T>::full({n, 1}, T(1));
  nn::Tensor<T> zeros({n, 1});
  out.disc = nn::mul_scalar(nn::add(nn::bce_with_logits(d_real, ones, nn::Tensor<T>()),
                                    nn::bce_with_logits(d_fake_detached, zeros, nn::Tensor<T>())),
                            T(0.5));
  out.gen = nn::bce_with_logits(disc.forward(code), ones, nn::Tensor<T>());
  return out;
}

/// Negative MI lower bound between projected globals and projected locals.
/// For each anchor i the global of plan.positive[i] is scored against every
/// local cell of i; negatives follow the plan.
template <typename T>
nn::Var<T> infomax_loss(const nn::Linear<T>& g_proj, const nn::Conv2d<T>& l_proj,
                        const nn::Var<T>& global, const nn::Var<T>& local,
                        const PairingPlan& plan, MiEstimator estimator) {
  const int64_t b = global.dim(0);
  ZFS_CHECK(static_cast<int64_t>(plan.positive.size()) == b, "pairing plan size mismatch");
  nn::Var<T> pg = g_proj.forward(global);                       // [B, d]
  nn::Var<T> pl4 = l_proj.forward(local);                       // [B, d, h, w]
  const int64_t d = pl4.dim(1), m = pl4.dim(2) * pl4.dim(3);
  nn::Var<T> pl = nn::reshape(pl4, {b, d, m});
  nn::Var<T> scores = nn::cross_scores(pg, pl);  // [B, B, M], S[i,j,m]
  auto flat = [b, m](int64_t i, int64_t j, int64_t cell) { return (i * b + j) * m + cell; };

  if (estimator == MiEstimator::kDV) {
    std::vector<int64_t> pos_idx, neg_idx;
    pos_idx.reserve(b * m);
    for (int64_t i = 0; i < b; ++i)
      for (int64_t cell = 0; cell < m; ++cell) pos_idx.push_back(flat(i, plan.positive[i], cell));
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j : plan.negatives[i])
        for (int64_t cell = 0; cell < m; ++cell) neg_idx.push_back(flat(i, j, cell));
    ZFS_CHECK(!neg_idx.empty(), "infomax plan has no negatives");
    const int64_t q = static_cast<int64_t>(neg_idx.size());
    nn::Var<T> pos = nn::gather_flat(scores, std::move(pos_idx),
                                     {static_cast<int64_t>(b * m)});
    nn::Var<T> neg = nn::gather_flat(scores, std::move(neg_idx), {q});
    // DV bound: E_pos[T] - log E_neg[e^T]; loss is its negation.
    nn::Var<T> bound = nn::sub(nn::mean_all(pos),
                               nn::add_scalar(nn::logsumexp_all(neg),
                                              static_cast<T>(-std::log(static_cast<double>(q)))));
    return nn::neg(bound);
  }

  // Contrastive softmax: one row per (anchor, cell), positive in column 0.
  const int64_t k = static_cast<int64_t>(plan.negatives.empty() ? 0 : plan.negatives[0].size());
  std::vector<int64_t> idx;
  idx.reserve(b * m * (1 + k));
  for (int64_t i = 0; i < b; ++i) {
    ZFS_CHECK(static_cast<int64_t>(plan.negatives[i].size()) == k,
              "contrastive estimator needs a uniform negative count");
    for (int64_t cell = 0; cell < m; ++cell) {
      idx.push_back(flat(i, plan.positive[i], cell));
      for (int64_t j : plan.negatives[i]) idx.push_back(flat(i, j, cell));
    }
  }
  nn::Var<T> rows = nn::gather_flat(scores, std::move(idx), {b * m, 1 + k});
  return nn::infonce_rows(rows);
}

/// Per-location classification on the local grid with one head shared across
/// locations. AC: multi-label BCE against the image's binarized attribute
/// vector; LC: cross-entropy against the image's label.
template <typename T>
nn::Var<T> local_aux_loss(const nn::Linear<T>& head, const nn::Var<T>& local, LocalLoss kind,
                          const std::vector<int64_t>& labels,
                          const nn::Tensor<T>& attr_targets) {
  ZFS_CHECK(kind != LocalLoss::kNone, "local_aux_loss called with kind=none");
  const int64_t n = local.dim(0), m = local.dim(2) * local.dim(3);
  nn::Var<T> rows = nn::nchw_to_rows(local);  // [N*M, C]
  nn::Var<T> logits = head.forward(rows);
  if (kind == LocalLoss::kLC) {
    std::vector<int64_t> tiled(n * m);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t cell = 0; cell < m; ++cell) tiled[i * m + cell] = labels[i];
    return nn::softmax_cross_entropy(logits, tiled);
  }
  const int64_t a = attr_targets.dim(1);
  ZFS_CHECK(attr_targets.dim(0) == n, "attribute target batch mismatch");
  nn::Tensor<T> tiled({n * m, a});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t cell = 0; cell < m; ++cell)
      for (int64_t j = 0; j < a; ++j) tiled.at2(i * m + cell, j) = attr_targets.at2(i, j);
  return nn::bce_with_logits(logits, tiled, nn::Tensor<T>());
}

/// Prototypical objective: softmax over negative squared distances from
/// embedded images to the embedded attribute prototypes of the train classes.
template <typename T>
nn::Var<T> prototypical_loss(const nn::Mlp<T>& img_emb, const nn::Mlp<T>& attr_emb,
                             const nn::Var<T>& features, const nn::Tensor<T>& attrs_train,
                             const std::vector<int64_t>& labels_train_ids) {
  nn::Var<T> q = img_emb.forward(features);
  nn::Var<T> protos = attr_emb.forward(nn::constant(attrs_train));
  nn::Var<T> dist = nn::pairwise_sqdist(q, protos);
  return nn::softmax_cross_entropy(nn::mul_scalar(dist, T(-1)), labels_train_ids);
}

/// Heads owned by one pretraining objective. Encoder parameters live in the
/// encoder; everything here is auxiliary and not part of the checkpoint.
template <typename T>
struct ObjectiveModel {
  ObjectiveConfig cfg;
  nn::ParamSet<T> params;
  nn::ParamSet<T> disc_params;  // AAE discriminator (separate optimizer)

  std::optional<nn::Linear<T>> fc_head;
  std::optional<nn::Linear<T>> mu_head, logvar_head, code_head;
  std::optional<Decoder<T>> decoder;
  std::optional<nn::Mlp<T>> disc;
  std::optional<nn::Linear<T>> g_proj;
  std::optional<nn::Conv2d<T>> l_proj;
  std::optional<nn::Linear<T>> local_head;
  std::optional<nn::Mlp<T>> pn_img, pn_attr;

  ObjectiveModel(const ObjectiveConfig& config, const enc::EncoderSpec& spec,
                 int64_t num_train_classes, int64_t num_attributes, uint64_t seed)
      : cfg(config) {
    cfg.validate();
    nn::Rng rng(seed);
    nn::Rng init = rng.fork("objective-init");
    const int64_t gdim = spec.global_dim;
    const int64_t local_ch = geometry_at(spec, enc::Tap::kLocal).c;
    switch (cfg.kind) {
      case Objective::kFC:
        fc_head.emplace(params, "fc_head", gdim, num_train_classes, init);
        break;
      case Objective::kVAE:
      case Objective::kBVAE:
        mu_head.emplace(params, "mu", gdim, cfg.latent_dim, init);
        logvar_head.emplace(params, "logvar", gdim, cfg.latent_dim, init);
        decoder.emplace(params, spec.input_size, cfg.latent_dim, init);
        break;
      case Objective::kAAE:
        code_head.emplace(params, "code", gdim, cfg.latent_dim, init);
        decoder.emplace(params, spec.input_size, cfg.latent_dim, init);
        disc.emplace(disc_params, "disc", cfg.latent_dim, 512, 1, init);
        break;
      case Objective::kDIM:
      case Objective::kAMDIM:
      case Objective::kCMDIM:
        g_proj.emplace(params, "g_proj", gdim, cfg.mi_dim, init);
        l_proj.emplace(params, "l_proj", local_ch, cfg.mi_dim, 1, 1, 0, init);
        break;
      case Objective::kPN:
        pn_img.emplace(params, "pn_img", gdim, 512, 512, init);
        pn_attr.emplace(params, "pn_attr", num_attributes, 512, 512, init);
        break;
    }
    if (cfg.local_loss == LocalLoss::kAC)
      local_head.emplace(params, "local_ac", local_ch, num_attributes, init);
    else if (cfg.local_loss == LocalLoss::kLC)
      local_head.emplace(params, "local_lc", local_ch, num_train_classes, init);
  }
};

}  // namespace zfs::pretrain
