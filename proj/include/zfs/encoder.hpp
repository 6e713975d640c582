#pragma once

#include <string>
#include <vector>

#include "zfs/geometry.hpp"
#include "zfs/nn/adam.hpp"
#include "zfs/nn/layers.hpp"

namespace zfs::enc {

enum class Family { kBasic, kAlexNet };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

/// One row of the encoder table: conv + batch norm + ReLU, optionally
/// followed by max pooling.
struct ConvBlock {
  int64_t out_ch, k, s, p;
  bool has_pool = false;
  int64_t pool_k = 0, pool_s = 0;
};

/// Feature taps exposed by the trunk. kLocal is the third convolution block;
/// the pre/post pool taps bracket the final pooling layer (alexnet only).
enum class Tap { kLocal, kPrePool, kPostPool };

struct EncoderSpec {
  Family family = Family::kBasic;
  int64_t input_size = 112;
  int64_t global_dim = 1024;
  int64_t local_tap = 2;

  static EncoderSpec basic(int64_t input_size = 112);
  static EncoderSpec alexnet(int64_t input_size = 112);

  std::vector<ConvBlock> blocks() const;
  /// Spatial side after each block (post-pool where a pool exists).
  std::vector<int64_t> spatial_chain() const;
  int64_t flat_dim() const;  // trunk output elements feeding the head
};

/// Receptive-field geometry of the given tap, independent of batch contents.
FeatureGeometry geometry_at(const EncoderSpec& spec, Tap tap);

/// Geometry after an arbitrary prefix of the table (for tests and probes).
FeatureGeometry geometry_after_block(const EncoderSpec& spec, int64_t block, bool after_pool);

template <typename T>
struct FeatureBundle {
  nn::Var<T> global;  // [N, global_dim]
  nn::Var<T> local;   // [N, C, h, w]
  FeatureGeometry geometry;
};

template <typename T>
class Encoder {
 public:
  Encoder(EncoderSpec spec, uint64_t seed);

  FeatureBundle<T> forward(const nn::Tensor<T>& batch, bool training, Tap tap = Tap::kLocal);

  const EncoderSpec& spec() const { return spec_; }
  nn::ParamSet<T>& params() { return params_; }
  bool trainable() const { return trainable_; }
  void set_trainable(bool on) {
    trainable_ = on;
    params_.set_trainable(on);
  }

  /// All persistent state: parameters plus batch-norm running statistics.
  std::vector<std::pair<std::string, nn::Tensor<T>*>> state_tensors();
  /// FNV-1a hash over all state bytes; used by frozen-encoder contracts.
  uint64_t state_checksum();

 private:
  EncoderSpec spec_;
  bool trainable_ = true;
  nn::ParamSet<T> params_;
  std::vector<nn::Conv2d<T>> convs_;
  std::vector<nn::BatchNorm<T>> conv_bns_;
  std::vector<nn::Linear<T>> fcs_;
  std::vector<nn::BatchNorm<T>> fc_bns_;
};

extern template class Encoder<float>;
extern template class Encoder<double>;

/// Self-describing checkpoint: JSON header (spec, seed, provenance, tensor
/// manifest) followed by raw little-endian float arrays.
void save_checkpoint(const std::string& path, Encoder<float>& encoder, uint64_t seed,
                     const std::string& provenance_json);
Encoder<float> load_checkpoint(const std::string& path, uint64_t* seed_out = nullptr,
                               std::string* provenance_json_out = nullptr);

}  // namespace zfs::enc
