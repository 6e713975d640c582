#include "zfs/parts_probes.hpp"

#include <cmath>

namespace zfs::probes {

namespace {

/// Flatten locals [N,C,h,w] + maps into rows [N*h*w, C] and targets
/// [N*h*w, P].
void build_rows(const nn::Tensor<float>& locals, const std::vector<data::PartMaps>& projected,
                nn::Tensor<float>& rows, nn::Tensor<float>& targets) {
  const int64_t n = locals.dim(0), c = locals.dim(1), h = locals.dim(2), w = locals.dim(3);
  ZFS_CHECK(static_cast<int64_t>(projected.size()) == n, "locals/maps count mismatch");
  const int64_t p = projected[0].num_parts;
  ZFS_CHECK(projected[0].h == h && projected[0].w == w,
            "projected maps do not match feature geometry");
  rows = nn::Tensor<float>({n * h * w, c});
  targets = nn::Tensor<float>({n * h * w, p});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const float* src = locals.data() + (i * c + ch) * h * w;
      for (int64_t s = 0; s < h * w; ++s) rows.at2(i * h * w + s, ch) = src[s];
    }
    for (int64_t k = 0; k < p; ++k)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          targets.at2(i * h * w + y * w + x, k) =
              projected[i].at(static_cast<int>(k), static_cast<int>(y), static_cast<int>(x))
                  ? 1.f
                  : 0.f;
  }
}

}  // namespace

PartProbeSet train_part_probes(const nn::Tensor<float>& locals,
                               const std::vector<data::PartMaps>& projected,
                               const ProbeConfig& cfg) {
  nn::Tensor<float> rows, targets;
  build_rows(locals, projected, rows, targets);
  const int64_t r = rows.dim(0), c = rows.dim(1), p = targets.dim(1);

  nn::Tensor<float> pos_weight({p});
  for (int64_t k = 0; k < p; ++k) {
    int64_t pos = 0;
    for (int64_t i = 0; i < r; ++i) pos += targets.at2(i, k) > 0 ? 1 : 0;
    const int64_t neg = r - pos;
    pos_weight[k] = pos > 0 ? std::min(100.f, static_cast<float>(neg) / pos) : 1.f;
  }

  PartProbeSet set;
  set.num_parts = p;
  set.channels = c;
  set.threshold = cfg.threshold;
  nn::Rng rng(cfg.seed);
  nn::Rng init = rng.fork("probe-init");
  nn::Rng order = rng.fork("probe-order");
  set.head = nn::Linear<float>(set.params, "probes", c, p, init);

  nn::Adam<float> opt(cfg.lr);
  std::vector<int64_t> all(r);
  for (int64_t i = 0; i < r; ++i) all[i] = i;
  size_t pos_it = all.size();
  const int64_t batch = std::min<int64_t>(cfg.batch, r);
  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<int64_t> pick;
    while (static_cast<int64_t>(pick.size()) < batch) {
      if (pos_it >= all.size()) {
        order.shuffle(all.begin(), all.end());
        pos_it = 0;
      }
      pick.push_back(all[pos_it++]);
    }
    nn::Tensor<float> bx({batch, c});
    nn::Tensor<float> bt({batch, p});
    for (int64_t i = 0; i < batch; ++i) {
      std::copy(rows.data() + pick[i] * c, rows.data() + (pick[i] + 1) * c, bx.data() + i * c);
      std::copy(targets.data() + pick[i] * p, targets.data() + (pick[i] + 1) * p,
                bt.data() + i * p);
    }
    set.params.zero_grad();
    nn::Var<float> loss = nn::bce_with_logits(set.head.forward(nn::constant(bx)), bt, pos_weight);
    nn::backward(loss);
    opt.step(set.params);
  }
  return set;
}

PartsF1 parts_f1(const PartProbeSet& probes, const nn::Tensor<float>& locals,
                 const std::vector<data::PartMaps>& projected) {
  nn::Tensor<float> rows, targets;
  build_rows(locals, projected, rows, targets);
  const int64_t r = rows.dim(0), p = targets.dim(1);
  ZFS_CHECK(p == probes.num_parts, "probe/map part count mismatch");
  nn::Tensor<float> logits = probes.head.forward(nn::constant(rows)).value();
  // probability > threshold  <=>  logit > log(t/(1-t))
  const float cut = static_cast<float>(
      std::log(probes.threshold / (1.0 - probes.threshold)));

  PartsF1 out;
  out.per_part.assign(p, 0);
  out.zero_positive_flag.assign(p, 0);
  double sum = 0;
  for (int64_t k = 0; k < p; ++k) {
    int64_t tp = 0, fp = 0, fn = 0, positives = 0;
    for (int64_t i = 0; i < r; ++i) {
      const bool truth = targets.at2(i, k) > 0;
      const bool pred = logits.at2(i, k) > cut;
      positives += truth ? 1 : 0;
      if (pred && truth) ++tp;
      else if (pred && !truth) ++fp;
      else if (!pred && truth) ++fn;
    }
    double f1 = 0;
    if (positives == 0) {
      out.zero_positive_flag[k] = 1;
    } else if (2 * tp + fp + fn > 0) {
      f1 = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    }
    out.per_part[k] = f1;
    sum += f1;
  }
  out.mean_f1 = sum / static_cast<double>(p);
  return out;
}

std::vector<data::PartMaps> projected_maps_for(const data::DatasetBundle& bundle,
                                               const std::vector<int64_t>& indices,
                                               const enc::FeatureGeometry& geom, int resize_to,
                                               int square_side) {
  ZFS_CHECK(bundle.parts.has_value(), "bundle has no part annotations");
  const data::CropFrame frame = data::eval_crop_frame(resize_to);
  std::vector<data::PartMaps> out;
  out.reserve(indices.size());
  for (int64_t idx : indices) {
    img::Image raw = bundle.images.get(idx);
    auto clicks = data::transform_clicks_to_crop(bundle.parts->clicks[static_cast<size_t>(idx)],
                                                 raw.h, raw.w, frame);
    data::PartMaps image_level =
        data::build_part_maps(clicks, bundle.parts->num_parts, frame.crop, frame.crop,
                              square_side);
    out.push_back(data::project_part_maps(image_level, geom, frame.crop, frame.crop));
  }
  return out;
}

}  // namespace zfs::probes
