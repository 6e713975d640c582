#pragma once

#include "zfs/trainer.hpp"

namespace zfs::zsl {

struct ProtoConfig {
  int64_t embed_dim = 512;
  int64_t hidden = 512;
  int64_t steps = 1000;
  int64_t batch = 64;
  double lr = 1e-4;
  uint64_t seed = 0;
  // Embedder depth: 1 = one-hidden-layer MLP, 0 = linear map. The linear
  // attribute embedder composes prototypes as sums of per-attribute vectors,
  // which is what transfers on strictly compositional data.
  int img_hidden_layers = 1;
  int attr_hidden_layers = 1;
  // Per-dimension standardization of input features, fit on the train split.
  bool standardize = false;
};

/// MLP or linear map into the common embedding space.
struct Embedder {
  bool is_linear = false;
  nn::Mlp<float> mlp;
  nn::Linear<float> lin;

  Embedder() = default;
  Embedder(nn::ParamSet<float>& ps, const std::string& name, int64_t in, int64_t hidden,
           int64_t out, int hidden_layers, nn::Rng& rng) {
    is_linear = hidden_layers == 0;
    if (is_linear)
      lin = nn::Linear<float>(ps, name, in, out, rng);
    else
      mlp = nn::Mlp<float>(ps, name, in, hidden, out, rng);
  }
  nn::Var<float> forward(const nn::Var<float>& x) const {
    return is_linear ? lin.forward(x) : mlp.forward(x);
  }
};

/// Two embedders into a common space; distance is squared Euclidean.
struct ProtoModel {
  nn::ParamSet<float> params;
  Embedder img_emb, attr_emb;
  int64_t feat_dim = 0, attr_dim = 0, embed_dim = 0;
  std::vector<int64_t> train_classes;
  // standardization fitted on train features (empty when disabled)
  nn::Tensor<float> feat_mean, feat_std;

  nn::Tensor<float> standardized(const nn::Tensor<float>& x) const;
};

struct ZslResult {
  double top1 = 0;
  std::vector<double> per_class;       // aligned with test_classes
  std::vector<int64_t> test_classes;   // ascending
  std::vector<int64_t> predictions;    // per evaluated image, class id
};

/// Train embedders on frozen features with cross-entropy over softmax of
/// negative distances to the embedded attribute prototypes of all train
/// classes. Throws when fewer than two train classes are present.
ProtoModel fit_protonet(const nn::Tensor<float>& features,
                        const std::vector<int64_t>& labels_global,
                        const nn::Tensor<float>& attributes,
                        const std::vector<int64_t>& train_classes, const ProtoConfig& cfg);

/// Nearest embedded attribute prototype among the unseen classes; ties break
/// to the lowest class index.
ZslResult predict_zsl(const ProtoModel& model, const nn::Tensor<float>& features,
                      const std::vector<int64_t>& labels_global,
                      const nn::Tensor<float>& attributes,
                      const std::vector<int64_t>& test_classes);

enum class AggregateMode { kAverageRepresentations, kAveragePredictions };

/// Local-feature variants: mode A embeds the mean of the local vectors and
/// classifies once; mode B classifies every location and averages the class
/// probabilities.
ZslResult predict_zsl_local(const ProtoModel& model, const nn::Tensor<float>& locals,
                            const std::vector<int64_t>& labels_global,
                            const nn::Tensor<float>& attributes,
                            const std::vector<int64_t>& test_classes, AggregateMode mode);

/// Per-image class probabilities (softmax of negative distances) for a stack
/// of feature rows; exposed for fixture tests of the averaging modes.
nn::Tensor<float> class_probabilities(const ProtoModel& model, const nn::Tensor<float>& rows,
                                      const nn::Tensor<float>& attributes,
                                      const std::vector<int64_t>& classes);

enum class FeatureKind { kGlobal, kAverageRepresentations, kAveragePredictions };

struct EvalOptions {
  enc::Tap tap = enc::Tap::kLocal;
  FeatureKind kind = FeatureKind::kGlobal;
  ProtoConfig proto;
  int resize_to = 128;
};

/// Full protocol: extract features of train/test splits under a frozen
/// encoder, fit the prototypical model on the train classes, evaluate top-1
/// on the unseen classes. Aborts if the encoder is not frozen.
ZslResult zsl_eval(enc::Encoder<float>& frozen_encoder, const data::DatasetBundle& bundle,
                   const EvalOptions& opts);

}  // namespace zfs::zsl
