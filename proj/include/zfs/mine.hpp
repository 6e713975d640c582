#pragma once

#include <functional>

#include "zfs/trainer.hpp"

namespace zfs::mi {

/// Stable value of the Donsker-Varadhan bound E_joint[T] - log E_marg[e^T]
/// from raw statistic samples.
double dv_bound(const std::vector<double>& t_joint, const std::vector<double>& t_marginal);

/// T_phi(g, l): concatenation followed by a two-hidden-layer MLP.
struct StatisticsNetwork {
  nn::ParamSet<float> params;
  nn::Linear<float> l1, l2, l3;
  int64_t g_dim = 0, l_dim = 0;
  bool trained = false;

  StatisticsNetwork() = default;
  StatisticsNetwork(int64_t gdim, int64_t ldim, int64_t hidden, uint64_t seed);

  /// Scores for a batch of (g, l) pairs -> Var [N,1].
  nn::Var<float> score(const nn::Var<float>& g, const nn::Var<float>& l) const;
  /// Convenience eval path on plain tensors.
  std::vector<double> score_eval(const nn::Tensor<float>& g, const nn::Tensor<float>& l) const;
};

/// One training batch: joint pairs aligned row-wise, marginal pairs built by
/// the provider (typically globals paired with locals of other images).
struct MineBatch {
  nn::Tensor<float> g_joint, l_joint;
  nn::Tensor<float> g_marg, l_marg;
};
using MineSampler = std::function<MineBatch(int64_t batch, nn::Rng&)>;

struct MineConfig {
  int64_t steps = 2000;
  int64_t batch = 256;
  double lr = 1e-3;
  uint64_t seed = 0;
};

/// Maximize the Eq.-1 bound; returns the final bound value on a large held
/// sample drawn from the same sampler. Aborts if the objective diverges.
double train_mine(StatisticsNetwork& statnet, const MineSampler& sampler, const MineConfig& cfg,
                  int64_t eval_batch = 4096);

/// Sampler over a frozen encoder's features: joint = (G_i, L_i at a random
/// cell); marginal = (G_i, L_j at a random cell) for an independently drawn j.
MineSampler feature_sampler(const pretrain::FeatureSet& features);

struct PMIHeatmap {
  int64_t h = 0, w = 0;
  std::vector<double> raw;         // T_phi(G_A, L_B[h,w])
  std::vector<double> normalized;  // softmax over locations; sums to 1
  int64_t source_image = -1, target_image = -1;
  bool statnet_trained = true;
};

/// Softmax over locations, computed in double; invariant to adding any
/// constant to the raw scores.
std::vector<double> normalize_scores(const std::vector<double>& raw);

/// Scores of one image's global feature against every local cell of another.
PMIHeatmap pmi_heatmap(const StatisticsNetwork& statnet, const nn::Tensor<float>& global_row,
                       const nn::Tensor<float>& local_grid);

void save_statnet(const std::string& path, const StatisticsNetwork& net);
StatisticsNetwork load_statnet(const std::string& path);

/// Overlay + raw-grid image files and a text sidecar with the raw scores.
void write_heatmap_artifacts(const std::string& prefix, const PMIHeatmap& map,
                             const img::Image& target_image);

/// Mean normalized score over part cells divided by the mean over all cells.
/// Throws if the part union is empty.
double parts_ratio(const PMIHeatmap& map, const std::vector<uint8_t>& part_union);

/// Cosine similarity between two (row-normalized) class attribute rows.
double attribute_similarity(const nn::Tensor<float>& attributes, int64_t class_a,
                            int64_t class_b);

struct RatioStudyConfig {
  int64_t n_pairs = 2000;
  uint64_t seed = 0;
  int resize_to = 128;
};

struct RatioStudyRow {
  int64_t image_a, image_b;
  double ratio, attr_sim, ssim;
};

struct RatioStudyResult {
  double r_attr = 0, r_ssim = 0;
  double p_attr = 1, p_ssim = 1;
  std::vector<RatioStudyRow> rows;
};

/// Parts-ratio correlations against attribute similarity and SSIM over
/// sampled cross-class test pairs.
RatioStudyResult ratio_correlation_study(const StatisticsNetwork& statnet,
                                         const pretrain::FeatureSet& test_features,
                                         const data::DatasetBundle& bundle,
                                         const std::vector<data::PartMaps>& projected_test,
                                         const RatioStudyConfig& cfg);

}  // namespace zfs::mi
