#pragma once

#include "zfs/trainer.hpp"

namespace zfs::probes {

struct ProbeConfig {
  int64_t steps = 400;
  int64_t batch = 512;  // (image, location) rows per step
  double lr = 1e-4;
  uint64_t seed = 0;
  double threshold = 0.5;  // decision threshold on probe probability
};

/// One linear probe per part over local-feature channels. Probes share no
/// parameters and never propagate gradients into the encoder (they only ever
/// see detached feature tensors).
struct PartProbeSet {
  nn::ParamSet<float> params;
  nn::Linear<float> head;  // [num_parts] rows, one per part
  int64_t num_parts = 0, channels = 0;
  double threshold = 0.5;
  enc::FeatureGeometry geometry;
};

/// Class-imbalance handling: per-part positive weighting by inverse
/// prevalence on the training rows.
PartProbeSet train_part_probes(const nn::Tensor<float>& locals,
                               const std::vector<data::PartMaps>& projected,
                               const ProbeConfig& cfg);

struct PartsF1 {
  double mean_f1 = 0;                 // unweighted mean over parts
  std::vector<double> per_part;
  std::vector<uint8_t> zero_positive_flag;  // parts with no positives in eval
};

/// Micro F1 over all (image, location) pairs per part, macro-averaged over
/// parts. Parts with zero eval positives score 0 and are flagged.
PartsF1 parts_f1(const PartProbeSet& probes, const nn::Tensor<float>& locals,
                 const std::vector<data::PartMaps>& projected);

/// Projected part maps for the listed bundle images, aligned with the
/// encoder's eval-time crop frame and local-feature geometry.
std::vector<data::PartMaps> projected_maps_for(const data::DatasetBundle& bundle,
                                               const std::vector<int64_t>& indices,
                                               const enc::FeatureGeometry& geom, int resize_to,
                                               int square_side = 10);

}  // namespace zfs::probes
