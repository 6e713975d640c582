#pragma once

#include <map>
#include <string>

#include "zfs/dataset.hpp"
#include "zfs/objectives.hpp"

namespace zfs::pretrain {

struct TrainConfig {
  ObjectiveConfig objective;
  enc::EncoderSpec encoder = enc::EncoderSpec::basic();
  uint64_t seed = 0;
  int64_t steps = 2000;
  int64_t batch = 64;
  double lr = 1e-4;  // Adam
  int resize_to = 128;
  std::string out_dir;  // when set: loss log + checkpoint written here
  bool zfs_strict = true;
  int64_t log_every = 10;
};

struct TrainResult {
  std::string checkpoint_path;
  std::map<std::string, double> last_losses;
  double wall_seconds = 0;
};

struct TrainedEncoder {
  enc::Encoder<float> encoder;
  TrainResult result;
};

/// Pretrain an encoder from seed-only initialization on the bundle's train
/// split. Every objective shares this driver; the total loss is the
/// objective's main loss plus local_loss_weight times the local auxiliary
/// loss when configured.
TrainedEncoder train_encoder(const TrainConfig& cfg, const data::DatasetBundle& bundle);

/// Eval-mode features of the given bundle images under a frozen encoder.
struct FeatureSet {
  nn::Tensor<float> global;  // [N, global_dim]
  nn::Tensor<float> local;   // [N, C, h, w]
  enc::FeatureGeometry geometry;
  std::vector<int64_t> labels;   // class id per row
  std::vector<int64_t> indices;  // bundle image index per row
};

FeatureSet extract_features(enc::Encoder<float>& encoder, const data::DatasetBundle& bundle,
                            const std::vector<int64_t>& indices, int resize_to,
                            enc::Tap tap = enc::Tap::kLocal, int64_t batch = 32);

/// Mean over spatial cells of the local grid -> [N, C].
nn::Tensor<float> local_mean_features(const FeatureSet& fs);
/// Rows of one image's local grid -> [h*w, C].
nn::Tensor<float> local_cell_rows(const nn::Tensor<float>& local, int64_t image_row);

}  // namespace zfs::pretrain
