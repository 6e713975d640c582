#include "zfs/encoder.hpp"

#include <fstream>

#include "json.hpp"

namespace zfs::enc {

using nlohmann::json;

std::string family_name(Family f) { return f == Family::kBasic ? "basic" : "alexnet"; }

Family family_from_name(const std::string& name) {
  if (name == "basic") return Family::kBasic;
  if (name == "alexnet") return Family::kAlexNet;
  throw std::runtime_error("unknown encoder family: " + name);
}

EncoderSpec EncoderSpec::basic(int64_t input_size) {
  EncoderSpec s;
  s.family = Family::kBasic;
  s.input_size = input_size;
  return s;
}

EncoderSpec EncoderSpec::alexnet(int64_t input_size) {
  EncoderSpec s;
  s.family = Family::kAlexNet;
  s.input_size = input_size;
  return s;
}

std::vector<ConvBlock> EncoderSpec::blocks() const {
  if (family == Family::kBasic) {
    return {
        {64, 4, 2, 1}, {128, 4, 2, 1}, {256, 4, 2, 1}, {512, 4, 2, 1}, {1024, 4, 2, 1},
    };
  }
  // AlexNet-style table. The two final pools are sized so that the pre/post
  // final-pool receptive fields are 65 and 85 pixels.
  return {
      {96, 3, 1, 1, true, 3, 2},  {192, 3, 1, 1, true, 3, 2}, {384, 3, 1, 1},
      {384, 3, 1, 1},             {192, 3, 1, 1, true, 6, 1}, {192, 3, 1, 1, true, 6, 2},
  };
}

std::vector<int64_t> EncoderSpec::spatial_chain() const {
  std::vector<int64_t> chain;
  int64_t s = input_size;
  for (const ConvBlock& b : blocks()) {
    s = stage_out(s, Stage{b.k, b.s, b.p});
    ZFS_CHECK(s > 0, "encoder table does not type-check against input size " +
                         std::to_string(input_size));
    if (b.has_pool) {
      s = stage_out(s, Stage{b.pool_k, b.pool_s, 0});
      ZFS_CHECK(s > 0, "encoder pooling does not type-check against input size " +
                           std::to_string(input_size));
    }
    chain.push_back(s);
  }
  return chain;
}

int64_t EncoderSpec::flat_dim() const {
  auto chain = spatial_chain();
  int64_t side = chain.back();
  return blocks().back().out_ch * side * side;
}

FeatureGeometry geometry_after_block(const EncoderSpec& spec, int64_t block, bool after_pool) {
  auto blks = spec.blocks();
  ZFS_CHECK(block >= 0 && block < static_cast<int64_t>(blks.size()), "no such encoder block");
  FeatureGeometry g;
  g.h = g.w = spec.input_size;
  for (int64_t i = 0; i <= block; ++i) {
    const ConvBlock& b = blks[i];
    g = fold_stage(g, Stage{b.k, b.s, b.p}, g.h, g.w);
    g.c = b.out_ch;
    if (b.has_pool && (i < block || after_pool))
      g = fold_stage(g, Stage{b.pool_k, b.pool_s, 0}, g.h, g.w);
  }
  return g;
}

FeatureGeometry geometry_at(const EncoderSpec& spec, Tap tap) {
  auto blks = spec.blocks();
  if (tap == Tap::kLocal) return geometry_after_block(spec, spec.local_tap, true);
  // Pre/post final pool taps exist only where the table has pooling layers.
  int64_t last_pool = -1;
  for (int64_t i = 0; i < static_cast<int64_t>(blks.size()); ++i)
    if (blks[i].has_pool) last_pool = i;
  ZFS_CHECK(last_pool >= 0, "tap absent in family: " + family_name(spec.family) +
                                " has no pooling layers");
  return geometry_after_block(spec, last_pool, tap == Tap::kPostPool);
}

template <typename T>
Encoder<T>::Encoder(EncoderSpec spec, uint64_t seed) : spec_(spec) {
  nn::Rng rng(seed);
  nn::Rng init = rng.fork("encoder-init");
  auto blks = spec_.blocks();
  spec_.spatial_chain();  // validates against input size
  int64_t in_ch = 3;
  for (size_t i = 0; i < blks.size(); ++i) {
    const ConvBlock& b = blks[i];
    std::string name = "conv" + std::to_string(i);
    convs_.emplace_back(params_, name, in_ch, b.out_ch, b.k, b.s, b.p, init);
    conv_bns_.emplace_back(params_, name + ".bn", b.out_ch, true);
    in_ch = b.out_ch;
  }
  const int64_t flat = spec_.flat_dim();
  if (spec_.family == Family::kBasic) {
    fcs_.emplace_back(params_, "fc0", flat, spec_.global_dim, init);
    fc_bns_.emplace_back(params_, "fc0.bn", spec_.global_dim, false);
  } else {
    fcs_.emplace_back(params_, "fc0", flat, 4096, init);
    fc_bns_.emplace_back(params_, "fc0.bn", 4096, false);
    fcs_.emplace_back(params_, "fc1", 4096, 4096, init);
    fc_bns_.emplace_back(params_, "fc1.bn", 4096, false);
    // final projection reconciling the 4096-wide head with the 1024-d global
    fcs_.emplace_back(params_, "proj", 4096, spec_.global_dim, init);
  }
}

template <typename T>
FeatureBundle<T> Encoder<T>::forward(const nn::Tensor<T>& batch, bool training, Tap tap) {
  ZFS_CHECK(batch.ndim() == 4 && batch.dim(1) == 3 && batch.dim(2) == spec_.input_size &&
                batch.dim(3) == spec_.input_size,
            "encoder input must be [N,3," + std::to_string(spec_.input_size) + "," +
                std::to_string(spec_.input_size) + "], got " + nn::shape_str(batch.shape()));
  auto blks = spec_.blocks();
  int64_t last_pool = -1;
  for (int64_t i = 0; i < static_cast<int64_t>(blks.size()); ++i)
    if (blks[i].has_pool) last_pool = i;
  if (tap != Tap::kLocal)
    ZFS_CHECK(last_pool >= 0, "tap absent in family: " + family_name(spec_.family));

  FeatureBundle<T> out;
  out.geometry = geometry_at(spec_, tap);
  nn::Var<T> x = nn::constant(batch);
  for (size_t i = 0; i < convs_.size(); ++i) {
    x = nn::relu(conv_bns_[i].forward(convs_[i].forward(x), training));
    const int64_t bi = static_cast<int64_t>(i);
    if (tap == Tap::kPrePool && bi == last_pool) out.local = x;
    if (blks[i].has_pool) x = nn::maxpool2d(x, blks[i].pool_k, blks[i].pool_s);
    if (tap == Tap::kLocal && bi == spec_.local_tap) out.local = x;
    if (tap == Tap::kPostPool && bi == last_pool) out.local = x;
  }
  const int64_t n = batch.dim(0);
  x = nn::reshape(x, {n, spec_.flat_dim()});
  if (spec_.family == Family::kBasic) {
    x = nn::relu(fc_bns_[0].forward(fcs_[0].forward(x), training));
  } else {
    x = nn::relu(fc_bns_[0].forward(fcs_[0].forward(x), training));
    x = nn::relu(fc_bns_[1].forward(fcs_[1].forward(x), training));
    x = fcs_[2].forward(x);
  }
  out.global = x;
  return out;
}

template <typename T>
std::vector<std::pair<std::string, nn::Tensor<T>*>> Encoder<T>::state_tensors() {
  std::vector<std::pair<std::string, nn::Tensor<T>*>> out;
  for (auto& [name, v] : params_.items) out.emplace_back(name, &v.value());
  for (size_t i = 0; i < conv_bns_.size(); ++i) {
    out.emplace_back("conv" + std::to_string(i) + ".bn.rmean", &conv_bns_[i].running_mean);
    out.emplace_back("conv" + std::to_string(i) + ".bn.rvar", &conv_bns_[i].running_var);
  }
  for (size_t i = 0; i < fc_bns_.size(); ++i) {
    out.emplace_back("fc" + std::to_string(i) + ".bn.rmean", &fc_bns_[i].running_mean);
    out.emplace_back("fc" + std::to_string(i) + ".bn.rvar", &fc_bns_[i].running_var);
  }
  return out;
}

template <typename T>
uint64_t Encoder<T>::state_checksum() {
  uint64_t h = 1469598103934665603ULL;
  for (auto& [name, t] : state_tensors()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t->data());
    const size_t n = static_cast<size_t>(t->numel()) * sizeof(T);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

template class Encoder<float>;
template class Encoder<double>;

namespace {
constexpr char kMagic[9] = "ZFSCKPT1";
}

void save_checkpoint(const std::string& path, Encoder<float>& encoder, uint64_t seed,
                     const std::string& provenance_json) {
  json header;
  header["spec"] = {{"family", family_name(encoder.spec().family)},
                    {"input_size", encoder.spec().input_size},
                    {"global_dim", encoder.spec().global_dim},
                    {"local_tap", encoder.spec().local_tap}};
  header["seed"] = seed;
  header["provenance"] = provenance_json.empty() ? json::object() : json::parse(provenance_json);
  json manifest = json::array();
  auto tensors = encoder.state_tensors();
  for (auto& [name, t] : tensors) {
    manifest.push_back({{"name", name}, {"shape", t->shape()}});
  }
  header["tensors"] = manifest;
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  ZFS_CHECK(out.good(), "cannot write checkpoint: " + path);
  out.write(kMagic, 8);
  uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->numel() * sizeof(float)));
  ZFS_CHECK(out.good(), "checkpoint write failed: " + path);
}

Encoder<float> load_checkpoint(const std::string& path, uint64_t* seed_out,
                               std::string* provenance_json_out) {
  std::ifstream in(path, std::ios::binary);
  ZFS_CHECK(in.good(), "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  ZFS_CHECK(in.good() && std::string(magic, 8) == std::string(kMagic, 8),
            "not a checkpoint file: " + path);
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  json header = json::parse(htext);

  EncoderSpec spec;
  spec.family = family_from_name(header["spec"]["family"].get<std::string>());
  spec.input_size = header["spec"]["input_size"].get<int64_t>();
  spec.global_dim = header["spec"]["global_dim"].get<int64_t>();
  spec.local_tap = header["spec"]["local_tap"].get<int64_t>();
  const uint64_t seed = header["seed"].get<uint64_t>();
  if (seed_out) *seed_out = seed;
  if (provenance_json_out) *provenance_json_out = header["provenance"].dump();

  Encoder<float> enc(spec, seed);
  auto tensors = enc.state_tensors();
  const auto& manifest = header["tensors"];
  ZFS_CHECK(manifest.size() == tensors.size(), "checkpoint tensor count mismatch");
  for (size_t i = 0; i < tensors.size(); ++i) {
    ZFS_CHECK(manifest[i]["name"].get<std::string>() == tensors[i].first,
              "checkpoint tensor order mismatch at " + tensors[i].first);
    auto shape = manifest[i]["shape"].get<std::vector<int64_t>>();
    ZFS_CHECK(shape == tensors[i].second->shape(), "checkpoint shape mismatch at " +
                                                       tensors[i].first);
    in.read(reinterpret_cast<char*>(tensors[i].second->data()),
            static_cast<std::streamsize>(tensors[i].second->numel() * sizeof(float)));
  }
  ZFS_CHECK(in.good(), "truncated checkpoint: " + path);
  return enc;
}

}  // namespace zfs::enc
