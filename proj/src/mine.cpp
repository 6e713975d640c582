#include "zfs/mine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "zfs/ssim.hpp"
#include "zfs/tre.hpp"

namespace zfs::mi {

namespace {

double log_mean_exp(const std::vector<double>& v) {
  ZFS_CHECK(!v.empty(), "log_mean_exp of empty sample");
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double s = 0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s / static_cast<double>(v.size()));
}

}  // namespace

double dv_bound(const std::vector<double>& t_joint, const std::vector<double>& t_marginal) {
  double mean = 0;
  for (double x : t_joint) mean += x;
  mean /= static_cast<double>(t_joint.size());
  return mean - log_mean_exp(t_marginal);
}

StatisticsNetwork::StatisticsNetwork(int64_t gdim, int64_t ldim, int64_t hidden, uint64_t seed)
    : g_dim(gdim), l_dim(ldim) {
  nn::Rng rng(seed);
  nn::Rng init = rng.fork("statnet-init");
  l1 = nn::Linear<float>(params, "t.l1", gdim + ldim, hidden, init);
  l2 = nn::Linear<float>(params, "t.l2", hidden, hidden, init);
  l3 = nn::Linear<float>(params, "t.l3", hidden, 1, init);
}

nn::Var<float> StatisticsNetwork::score(const nn::Var<float>& g, const nn::Var<float>& l) const {
  nn::Var<float> x = nn::concat_cols(g, l);
  x = nn::relu(l1.forward(x));
  x = nn::relu(l2.forward(x));
  return l3.forward(x);
}

std::vector<double> StatisticsNetwork::score_eval(const nn::Tensor<float>& g,
                                                  const nn::Tensor<float>& l) const {
  nn::Var<float> s = score(nn::constant(g), nn::constant(l));
  std::vector<double> out(static_cast<size_t>(s.numel()));
  for (int64_t i = 0; i < s.numel(); ++i) out[static_cast<size_t>(i)] = s.value()[i];
  return out;
}

double train_mine(StatisticsNetwork& statnet, const MineSampler& sampler, const MineConfig& cfg,
                  int64_t eval_batch) {
  nn::Rng rng(cfg.seed);
  nn::Rng data_rng = rng.fork("mine-data");
  nn::Adam<float> opt(cfg.lr);
  for (int64_t step = 0; step < cfg.steps; ++step) {
    MineBatch b = sampler(cfg.batch, data_rng);
    statnet.params.zero_grad();
    nn::Var<float> tj = statnet.score(nn::constant(b.g_joint), nn::constant(b.l_joint));
    nn::Var<float> tm = statnet.score(nn::constant(b.g_marg), nn::constant(b.l_marg));
    const int64_t q = tm.numel();
    // loss = -( E_joint[T] - log E_marg[e^T] ), stabilized via logsumexp
    nn::Var<float> bound =
        nn::sub(nn::mean_all(tj),
                nn::add_scalar(nn::logsumexp_all(tm),
                               static_cast<float>(-std::log(static_cast<double>(q)))));
    nn::Var<float> loss = nn::neg(bound);
    const double v = loss.value()[0];
    ZFS_CHECK(std::isfinite(v),
              "MINE objective diverged at step " + std::to_string(step));
    nn::backward(loss);
    opt.step(statnet.params);
  }
  statnet.trained = true;

  MineBatch b = sampler(eval_batch, data_rng);
  std::vector<double> tj = statnet.score_eval(b.g_joint, b.l_joint);
  std::vector<double> tm = statnet.score_eval(b.g_marg, b.l_marg);
  return dv_bound(tj, tm);
}

MineSampler feature_sampler(const pretrain::FeatureSet& features) {
  const int64_t n = features.global.dim(0);
  const int64_t gdim = features.global.dim(1);
  const int64_t c = features.local.dim(1);
  const int64_t m = features.local.dim(2) * features.local.dim(3);
  ZFS_CHECK(n >= 2, "MINE sampler needs at least two images");
  // capture by value: tensors are cheap shared snapshots of the feature set
  nn::Tensor<float> global = features.global;
  nn::Tensor<float> local = features.local;
  return [n, gdim, c, m, global, local](int64_t batch, nn::Rng& rng) {
    MineBatch out;
    out.g_joint = nn::Tensor<float>({batch, gdim});
    out.l_joint = nn::Tensor<float>({batch, c});
    out.g_marg = nn::Tensor<float>({batch, gdim});
    out.l_marg = nn::Tensor<float>({batch, c});
    for (int64_t i = 0; i < batch; ++i) {
      const int64_t a = rng.randint(n);
      const int64_t cell = rng.randint(m);
      std::copy(global.data() + a * gdim, global.data() + (a + 1) * gdim,
                out.g_joint.data() + i * gdim);
      for (int64_t ch = 0; ch < c; ++ch)
        out.l_joint.at2(i, ch) = local[(a * c + ch) * m + cell];
      int64_t b = rng.randint(n - 1);
      if (b >= a) ++b;  // independent draw, distinct image
      const int64_t cell_b = rng.randint(m);
      std::copy(global.data() + a * gdim, global.data() + (a + 1) * gdim,
                out.g_marg.data() + i * gdim);
      for (int64_t ch = 0; ch < c; ++ch)
        out.l_marg.at2(i, ch) = local[(b * c + ch) * m + cell_b];
    }
    return out;
  };
}

PMIHeatmap pmi_heatmap(const StatisticsNetwork& statnet, const nn::Tensor<float>& global_row,
                       const nn::Tensor<float>& local_grid) {
  ZFS_CHECK(local_grid.ndim() == 3, "pmi_heatmap expects one local grid [C,h,w]");
  const int64_t c = local_grid.dim(0), h = local_grid.dim(1), w = local_grid.dim(2);
  const int64_t m = h * w;
  nn::Tensor<float> g({m, global_row.numel()});
  nn::Tensor<float> l({m, c});
  for (int64_t cell = 0; cell < m; ++cell) {
    std::copy(global_row.data(), global_row.data() + global_row.numel(),
              g.data() + cell * global_row.numel());
    for (int64_t ch = 0; ch < c; ++ch) l.at2(cell, ch) = local_grid[ch * m + cell];
  }
  PMIHeatmap map;
  map.h = h;
  map.w = w;
  map.raw = statnet.score_eval(g, l);
  map.statnet_trained = statnet.trained;
  map.normalized = normalize_scores(map.raw);
  return map;
}

std::vector<double> normalize_scores(const std::vector<double>& raw) {
  ZFS_CHECK(!raw.empty(), "normalize_scores on an empty grid");
  double mx = raw[0];
  for (double v : raw) mx = std::max(mx, v);
  double z = 0;
  for (double v : raw) z += std::exp(v - mx);
  std::vector<double> out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) out[i] = std::exp(raw[i] - mx) / z;
  return out;
}

void write_heatmap_artifacts(const std::string& prefix, const PMIHeatmap& map,
                             const img::Image& target_image) {
  // raw grid, min-max scaled
  double lo = map.raw[0], hi = map.raw[0];
  for (double v : map.raw) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo > 0 ? hi - lo : 1.0;
  std::vector<float> gray(map.raw.size());
  for (size_t i = 0; i < map.raw.size(); ++i)
    gray[i] = static_cast<float>((map.raw[i] - lo) / span);
  img::write_pgm(prefix + "_raw.pgm", gray, static_cast<int>(map.h), static_cast<int>(map.w));

  // overlay: bilinear-upsampled normalized map blended in yellow
  img::Image overlay = target_image;
  img::Image heat(static_cast<int>(map.h), static_cast<int>(map.w));
  double nhi = 0;
  for (double v : map.normalized) nhi = std::max(nhi, v);
  for (int64_t i = 0; i < static_cast<int64_t>(map.normalized.size()); ++i) {
    const float v = static_cast<float>(map.normalized[static_cast<size_t>(i)] / nhi);
    heat.data[static_cast<size_t>(i)] = v;                                 // R
    heat.data[map.normalized.size() + static_cast<size_t>(i)] = v;         // G
    heat.data[2 * map.normalized.size() + static_cast<size_t>(i)] = 0.f;   // B
  }
  img::Image up = img::resize_bilinear(heat, overlay.h, overlay.w);
  for (size_t i = 0; i < overlay.data.size(); ++i)
    overlay.data[i] = 0.5f * overlay.data[i] + 0.5f * up.data[i];
  img::write_ppm(prefix + "_overlay.ppm", overlay);

  std::ofstream side(prefix + "_scores.tsv");
  side << "# trained=" << (map.statnet_trained ? 1 : 0) << " source=" << map.source_image
       << " target=" << map.target_image << "\n";
  for (int64_t y = 0; y < map.h; ++y) {
    for (int64_t x = 0; x < map.w; ++x)
      side << (x ? "\t" : "") << map.raw[static_cast<size_t>(y * map.w + x)];
    side << "\n";
  }
}

void save_statnet(const std::string& path, const StatisticsNetwork& net) {
  std::ofstream out(path, std::ios::binary);
  ZFS_CHECK(out.good(), "cannot write statnet: " + path);
  const char magic[8] = "ZFSTAT1";
  out.write(magic, 8);
  int64_t header[4] = {net.g_dim, net.l_dim, net.l1.out, net.trained ? 1 : 0};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  for (const auto& [name, v] : net.params.items)
    out.write(reinterpret_cast<const char*>(v.value().data()),
              static_cast<std::streamsize>(v.numel() * sizeof(float)));
}

StatisticsNetwork load_statnet(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  ZFS_CHECK(in.good(), "cannot open statnet: " + path);
  char magic[8];
  in.read(magic, 8);
  ZFS_CHECK(std::string(magic, 7) == "ZFSTAT1", "not a statnet file: " + path);
  int64_t header[4];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  StatisticsNetwork net(header[0], header[1], header[2], 0);
  net.trained = header[3] != 0;
  for (auto& [name, v] : net.params.items)
    in.read(reinterpret_cast<char*>(v.value().data()),
            static_cast<std::streamsize>(v.numel() * sizeof(float)));
  ZFS_CHECK(in.good(), "truncated statnet: " + path);
  return net;
}

double parts_ratio(const PMIHeatmap& map, const std::vector<uint8_t>& part_union) {
  ZFS_CHECK(part_union.size() == map.normalized.size(),
            "part union does not align with the heatmap grid");
  long double part_sum = 0, all_sum = 0;
  int64_t part_n = 0;
  const int64_t m = static_cast<int64_t>(map.normalized.size());
  for (int64_t i = 0; i < m; ++i) {
    all_sum += map.normalized[static_cast<size_t>(i)];
    if (part_union[static_cast<size_t>(i)]) {
      part_sum += map.normalized[static_cast<size_t>(i)];
      ++part_n;
    }
  }
  ZFS_CHECK(part_n > 0, "parts_ratio undefined: empty part union");
  const long double mean_part = part_sum / part_n;
  const long double mean_all = all_sum / m;
  return static_cast<double>(mean_part / mean_all);
}

double attribute_similarity(const nn::Tensor<float>& attributes, int64_t class_a,
                            int64_t class_b) {
  ZFS_CHECK(class_a >= 0 && class_a < attributes.dim(0) && class_b >= 0 &&
                class_b < attributes.dim(0),
            "attribute_similarity class out of range");
  double dot = 0, na = 0, nb = 0;
  for (int64_t j = 0; j < attributes.dim(1); ++j) {
    const double a = attributes.at2(class_a, j), b = attributes.at2(class_b, j);
    dot += a * b;
    na += a * a;
    nb += b * b;
  }
  return dot / std::sqrt(na * nb);
}

namespace {

/// Two-sided p-value of a Pearson r under the null, normal approximation of
/// the t statistic (adequate at study sample sizes).
double pearson_p_value(double r, int64_t n) {
  if (n < 4) return 1.0;
  const double t = r * std::sqrt((n - 2) / std::max(1e-12, 1.0 - r * r));
  return std::erfc(std::abs(t) / std::sqrt(2.0));
}

}  // namespace

RatioStudyResult ratio_correlation_study(const StatisticsNetwork& statnet,
                                         const pretrain::FeatureSet& test_features,
                                         const data::DatasetBundle& bundle,
                                         const std::vector<data::PartMaps>& projected_test,
                                         const RatioStudyConfig& cfg) {
  const int64_t n = test_features.global.dim(0);
  ZFS_CHECK(n >= 2, "ratio study needs at least two test images");
  ZFS_CHECK(projected_test.size() == static_cast<size_t>(n),
            "ratio study maps/features mismatch");
  nn::Rng rng(cfg.seed);
  const data::CropFrame frame = data::eval_crop_frame(cfg.resize_to);

  RatioStudyResult out;
  std::vector<double> ratios, attr_sims, ssims;
  const int64_t gdim = test_features.global.dim(1);
  const int64_t c = test_features.local.dim(1);
  const int64_t h = test_features.local.dim(2), w = test_features.local.dim(3);
  int64_t attempts = 0;
  while (static_cast<int64_t>(ratios.size()) < cfg.n_pairs && attempts < cfg.n_pairs * 20) {
    ++attempts;
    const int64_t a = rng.randint(n);
    const int64_t b = rng.randint(n);
    if (a == b || test_features.labels[a] == test_features.labels[b]) continue;
    const auto part_union = data::any_part_union(projected_test[static_cast<size_t>(b)]);
    bool any = false;
    for (uint8_t v : part_union) any = any || v;
    if (!any) continue;

    nn::Tensor<float> g({gdim});
    std::copy(test_features.global.data() + a * gdim, test_features.global.data() + (a + 1) * gdim,
              g.data());
    nn::Tensor<float> l({c, h, w});
    std::copy(test_features.local.data() + b * c * h * w,
              test_features.local.data() + (b + 1) * c * h * w, l.data());
    PMIHeatmap map = pmi_heatmap(statnet, g, l);
    map.source_image = test_features.indices[a];
    map.target_image = test_features.indices[b];

    img::Image ia = data::eval_view(bundle.images.get(test_features.indices[a]), frame);
    img::Image ib = data::eval_view(bundle.images.get(test_features.indices[b]), frame);

    RatioStudyRow row;
    row.image_a = test_features.indices[a];
    row.image_b = test_features.indices[b];
    row.ratio = parts_ratio(map, part_union);
    row.attr_sim = attribute_similarity(bundle.attributes, test_features.labels[a],
                                        test_features.labels[b]);
    row.ssim = ssim(ia, ib);
    out.rows.push_back(row);
    ratios.push_back(row.ratio);
    attr_sims.push_back(row.attr_sim);
    ssims.push_back(row.ssim);
  }
  ZFS_CHECK(ratios.size() >= 3, "ratio study could not sample enough valid pairs");
  out.r_attr = tre::pearson(ratios, attr_sims);
  out.r_ssim = tre::pearson(ratios, ssims);
  out.p_attr = pearson_p_value(out.r_attr, static_cast<int64_t>(ratios.size()));
  out.p_ssim = pearson_p_value(out.r_ssim, static_cast<int64_t>(ratios.size()));
  return out;
}

}  // namespace zfs::mi
