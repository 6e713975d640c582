#include "zfs/objectives.hpp"

namespace zfs::pretrain {

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::kFC: return "fc";
    case Objective::kVAE: return "vae";
    case Objective::kBVAE: return "bvae";
    case Objective::kAAE: return "aae";
    case Objective::kDIM: return "dim";
    case Objective::kAMDIM: return "amdim";
    case Objective::kCMDIM: return "cmdim";
    case Objective::kPN: return "pn";
  }
  return "?";
}

Objective objective_from_name(const std::string& s) {
  for (Objective o : {Objective::kFC, Objective::kVAE, Objective::kBVAE, Objective::kAAE,
                      Objective::kDIM, Objective::kAMDIM, Objective::kCMDIM, Objective::kPN})
    if (objective_name(o) == s) return o;
  throw std::runtime_error("unknown objective: " + s);
}

std::string local_loss_name(LocalLoss l) {
  switch (l) {
    case LocalLoss::kNone: return "none";
    case LocalLoss::kAC: return "ac";
    case LocalLoss::kLC: return "lc";
  }
  return "?";
}

LocalLoss local_loss_from_name(const std::string& s) {
  if (s == "none" || s == "normal") return LocalLoss::kNone;
  if (s == "ac") return LocalLoss::kAC;
  if (s == "lc") return LocalLoss::kLC;
  throw std::runtime_error("unknown local loss: " + s);
}

MiEstimator default_estimator(Objective o) {
  return o == Objective::kAMDIM ? MiEstimator::kNCE : MiEstimator::kDV;
}

void ObjectiveConfig::validate() const {
  ZFS_CHECK(beta >= 0, "beta must be non-negative");
  ZFS_CHECK(match_prob >= 0 && match_prob <= 1, "match probability must be in [0,1]");
  ZFS_CHECK(local_loss == LocalLoss::kNone || local_loss_weight > 0,
            "local_loss_weight must be positive when a local loss is enabled");
  ZFS_CHECK(latent_dim > 0 && mi_dim > 0, "head dimensions must be positive");
}

PairingPlan cmdim_pairing(const std::vector<int64_t>& labels, double p, nn::Rng& rng) {
  const int64_t b = static_cast<int64_t>(labels.size());
  ZFS_CHECK(b > 0, "pairing over an empty batch");
  PairingPlan plan;
  plan.positive.resize(b);
  plan.negatives.resize(b);
  plan.intra_class.assign(b, 0);
  for (int64_t i = 0; i < b; ++i) {
    std::vector<int64_t> same, other;
    for (int64_t j = 0; j < b; ++j) {
      if (j == i) continue;
      (labels[j] == labels[i] ? same : other).push_back(j);
    }
    plan.positive[i] = i;
    if (p > 0 && !same.empty() && rng.bernoulli(p)) {
      plan.positive[i] = same[rng.randint(static_cast<int64_t>(same.size()))];
      plan.intra_class[i] = 1;
    }
    if (!other.empty()) {
      plan.negatives[i] = std::move(other);
    } else {
      // single-class batch: fall back to instance discrimination
      for (int64_t j = 0; j < b; ++j)
        if (j != i) plan.negatives[i].push_back(j);
    }
  }
  return plan;
}

PairingPlan dim_pairing(int64_t batch_size) {
  ZFS_CHECK(batch_size > 1, "DIM pairing needs at least two inputs");
  PairingPlan plan;
  plan.positive.resize(batch_size);
  plan.negatives.resize(batch_size);
  plan.intra_class.assign(batch_size, 0);
  for (int64_t i = 0; i < batch_size; ++i) {
    plan.positive[i] = i;
    for (int64_t j = 0; j < batch_size; ++j)
      if (j != i) plan.negatives[i].push_back(j);
  }
  return plan;
}

}  // namespace zfs::pretrain
