#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "zfs/figures.hpp"
#include "zfs/mine.hpp"
#include "zfs/parts_probes.hpp"
#include "zfs/protonet.hpp"
#include "zfs/ssim.hpp"
#include "zfs/store.hpp"
#include "zfs/synthetic.hpp"
#include "zfs/tre.hpp"
#include "zfs/trainer.hpp"
#include "zfs/version.hpp"

namespace fs = std::filesystem;
using namespace zfs;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string data_root;
  std::string dataset = "synthetic";
  std::string store_path = "results/runs.tsv";
  uint64_t seed = 0;
  int resize_to = 128;
  bool zfs_strict = true;
};

std::string resolve_data_root(const std::string& given) {
  if (!given.empty()) return given;
  if (const char* env = std::getenv("ZFS_DATA_ROOT")) return env;
  throw std::runtime_error("no data root: pass --data or set ZFS_DATA_ROOT");
}

data::DatasetBundle load_bundle(const CommonOpts& opts) {
  return data::load_zsl_dataset(resolve_data_root(opts.data_root), opts.dataset);
}

/// ZFS gate on checkpoint consumption: strict mode refuses checkpoints whose
/// provenance does not assert seed-only training.
enc::Encoder<float> load_encoder_checked(const std::string& path, bool zfs_strict,
                                         json* prov_out = nullptr) {
  std::string prov_text;
  enc::Encoder<float> enc = enc::load_checkpoint(path, nullptr, &prov_text);
  json prov = json::parse(prov_text.empty() ? "{}" : prov_text);
  if (zfs_strict && (!prov.contains("zfs") || prov["zfs"] != true))
    throw std::runtime_error(
        "ZFS violation: checkpoint " + path +
        " does not carry zfs provenance (use --no-zfs-strict to override)");
  if (prov_out) *prov_out = prov;
  enc.set_trainable(false);
  return enc;
}

void append_metric(const harness::ResultsStore& store, const CommonOpts& opts,
                   const std::map<std::string, std::string>& cfg, const std::string& objective,
                   const std::string& encoder, const std::string& local_loss,
                   const std::string& metric, double value, double wall) {
  harness::RunRecord r;
  r.fingerprint = harness::config_fingerprint(cfg);
  r.run_id = harness::make_run_id(r.fingerprint, opts.seed);
  r.dataset = opts.dataset;
  r.objective = objective;
  r.encoder = encoder;
  r.local_loss = local_loss;
  r.seed = opts.seed;
  r.metric = metric;
  r.value = value;
  r.wall_seconds = wall;
  r.version = code_version();
  store.append(r);
}

std::map<std::string, std::string> fingerprint_map(
    std::initializer_list<std::pair<const std::string, std::string>> kv) {
  return std::map<std::string, std::string>(kv);
}

enc::Tap tap_from_name(const std::string& s) {
  if (s == "local") return enc::Tap::kLocal;
  if (s == "pre-pool") return enc::Tap::kPrePool;
  if (s == "post-pool") return enc::Tap::kPostPool;
  throw std::runtime_error("unknown tap: " + s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zero-shot-from-scratch toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;

  // ---- gen-synthetic ----
  auto* gen = app.add_subcommand("gen-synthetic", "generate the compositional dataset");
  data::SyntheticSpec sspec;
  std::string gen_out;
  gen->add_option("--out", gen_out, "output dataset root")->required();
  gen->add_option("--classes", sspec.num_classes);
  gen->add_option("--attributes", sspec.num_attributes);
  gen->add_option("--image-size", sspec.image_size);
  gen->add_option("--glyph-size", sspec.glyph_size);
  gen->add_option("--images-per-class", sspec.images_per_class);
  gen->add_option("--test-classes", sspec.num_test_classes);
  gen->add_option("--min-true", sspec.min_true);
  gen->add_option("--max-true", sspec.max_true);
  gen->add_option("--seed", sspec.seed);
  gen->set_config("--config");

  // ---- train ----
  auto* train = app.add_subcommand("train", "pretrain an encoder on the train split");
  pretrain::TrainConfig tcfg;
  std::string objective_name_s = "fc", local_loss_s = "none", encoder_s = "basic";
  std::string train_out = "runs/train";
  int train_input = 0;
  train->add_option("--data", opts.data_root, "dataset root (or ZFS_DATA_ROOT)");
  train->add_option("--dataset", opts.dataset, "dataset name");
  train->add_option("--objective", objective_name_s)
      ->check(CLI::IsMember({"fc", "vae", "bvae", "aae", "dim", "amdim", "cmdim", "pn"}));
  train->add_option("--local-loss", local_loss_s)->check(CLI::IsMember({"none", "ac", "lc"}));
  train->add_option("--encoder", encoder_s)->check(CLI::IsMember({"basic", "alexnet"}));
  train->add_option("--seed", opts.seed);
  train->add_option("--steps", tcfg.steps);
  train->add_option("--batch", tcfg.batch);
  train->add_option("--lr", tcfg.lr);
  train->add_option("--beta", tcfg.objective.beta);
  train->add_option("--match-prob", tcfg.objective.match_prob);
  train->add_option("--local-loss-weight", tcfg.objective.local_loss_weight);
  train->add_option("--latent-dim", tcfg.objective.latent_dim);
  train->add_option("--resize", opts.resize_to, "preprocess resize (crop = 0.875 * resize)");
  train->add_option("--input-size", train_input, "encoder input (defaults to the crop size)");
  train->add_option("--out", train_out);
  train->add_option("--store", opts.store_path);
  train->add_flag("--zfs-strict,!--no-zfs-strict", opts.zfs_strict);
  train->set_config("--config");

  // ---- eval-zsl ----
  auto* evalz = app.add_subcommand("eval-zsl", "prototypical zero-shot evaluation");
  std::string ckpt_path, feature_s = "global", tap_s = "local", eval_out = "runs/eval";
  zsl::ProtoConfig proto;
  evalz->add_option("--checkpoint", ckpt_path)->required();
  evalz->add_option("--data", opts.data_root);
  evalz->add_option("--dataset", opts.dataset);
  evalz->add_option("--feature", feature_s)
      ->check(CLI::IsMember({"global", "avg-repr", "avg-pred"}));
  evalz->add_option("--tap", tap_s)->check(CLI::IsMember({"local", "pre-pool", "post-pool"}));
  evalz->add_option("--proto-steps", proto.steps);
  evalz->add_option("--proto-lr", proto.lr);
  evalz->add_option("--proto-hidden", proto.hidden);
  evalz->add_option("--img-hidden-layers", proto.img_hidden_layers);
  evalz->add_option("--attr-hidden-layers", proto.attr_hidden_layers);
  evalz->add_flag("--standardize", proto.standardize);
  evalz->add_option("--resize", opts.resize_to);
  evalz->add_option("--seed", opts.seed);
  evalz->add_option("--out", eval_out);
  evalz->add_option("--store", opts.store_path);
  evalz->add_flag("--zfs-strict,!--no-zfs-strict", opts.zfs_strict);
  evalz->set_config("--config");

  // ---- probe-parts ----
  auto* probe = app.add_subcommand("probe-parts", "train part probes and report parts-F1");
  probes::ProbeConfig pcfg;
  std::string probe_out = "runs/probes";
  probe->add_option("--checkpoint", ckpt_path)->required();
  probe->add_option("--data", opts.data_root);
  probe->add_option("--dataset", opts.dataset);
  probe->add_option("--steps", pcfg.steps);
  probe->add_option("--lr", pcfg.lr);
  probe->add_option("--resize", opts.resize_to);
  probe->add_option("--seed", opts.seed);
  probe->add_option("--out", probe_out);
  probe->add_option("--store", opts.store_path);
  probe->add_flag("--zfs-strict,!--no-zfs-strict", opts.zfs_strict);
  probe->set_config("--config");

  // ---- mi-train ----
  auto* mit = app.add_subcommand("mi-train", "train the MINE statistics network");
  mi::MineConfig mcfg;
  std::string statnet_out = "runs/statnet.bin";
  int64_t mi_hidden = 512;
  mit->add_option("--checkpoint", ckpt_path)->required();
  mit->add_option("--data", opts.data_root);
  mit->add_option("--dataset", opts.dataset);
  mit->add_option("--steps", mcfg.steps);
  mit->add_option("--batch", mcfg.batch);
  mit->add_option("--lr", mcfg.lr);
  mit->add_option("--hidden", mi_hidden);
  mit->add_option("--resize", opts.resize_to);
  mit->add_option("--seed", opts.seed);
  mit->add_option("--out", statnet_out);
  mit->add_option("--store", opts.store_path);
  mit->add_flag("--zfs-strict,!--no-zfs-strict", opts.zfs_strict);
  mit->set_config("--config");

  // ---- mi-viz ----
  auto* viz = app.add_subcommand("mi-viz", "PMI heatmap between two images");
  std::string statnet_path, viz_out = "runs/heatmaps";
  int64_t image_a = 0, image_b = 1;
  viz->add_option("--checkpoint", ckpt_path)->required();
  viz->add_option("--statnet", statnet_path)->required();
  viz->add_option("--data", opts.data_root);
  viz->add_option("--dataset", opts.dataset);
  viz->add_option("--image-a", image_a, "source image index (global feature)");
  viz->add_option("--image-b", image_b, "target image index (local grid)");
  viz->add_option("--resize", opts.resize_to);
  viz->add_option("--out", viz_out);
  viz->add_flag("--zfs-strict,!--no-zfs-strict", opts.zfs_strict);
  viz->set_config("--config");

  // ---- mi-study ----
  auto* study = app.add_subcommand("mi-study", "parts-ratio correlation study");
  mi::RatioStudyConfig rscfg;
  std::string study_out = "runs/mi_study";
  study->add_option("--checkpoint", ckpt_path)->required();
  study->add_option("--statnet", statnet_path)->required();
  study->add_option("--data", opts.data_root);
  study->add_option("--dataset", opts.dataset);
  study->add_option("--pairs", rscfg.n_pairs);
  study->add_option("--resize", opts.resize_to);
  study->add_option("--seed", opts.seed);
  study->add_option("--out", study_out);
  study->add_option("--store", opts.store_path);
  study->add_flag("--zfs-strict,!--no-zfs-strict", opts.zfs_strict);
  study->set_config("--config");

  // ---- tre ----
  auto* tre_cmd = app.add_subcommand("tre", "TRE ratio of a checkpointed encoder");
  tre::TreRatioConfig trcfg;
  tre_cmd->add_option("--checkpoint", ckpt_path)->required();
  tre_cmd->add_option("--data", opts.data_root);
  tre_cmd->add_option("--dataset", opts.dataset);
  tre_cmd->add_option("--draws", trcfg.draws);
  tre_cmd->add_option("--fit-steps", trcfg.budget.max_steps);
  tre_cmd->add_option("--fit-lr", trcfg.budget.lr);
  tre_cmd->add_option("--resize", opts.resize_to);
  tre_cmd->add_option("--seed", opts.seed);
  tre_cmd->add_option("--store", opts.store_path);
  tre_cmd->add_flag("--zfs-strict,!--no-zfs-strict", opts.zfs_strict);
  tre_cmd->set_config("--config");

  // ---- grid ----
  auto* grid = app.add_subcommand("grid", "run a cartesian experiment grid");
  std::string grid_spec_path, grid_out = "runs/grid";
  bool dry_run = false;
  int64_t grid_steps = 300;
  grid->add_option("--spec", grid_spec_path)->required();
  grid->add_option("--data", opts.data_root);
  grid->add_flag("--dry-run", dry_run, "print the cell count and exit");
  grid->add_option("--steps", grid_steps, "training steps per cell");
  grid->add_option("--resize", opts.resize_to);
  grid->add_option("--out", grid_out);
  grid->add_option("--store", opts.store_path);
  grid->set_config("--config");

  // ---- report ----
  auto* report = app.add_subcommand("report", "tables and figures from the results store");
  std::string table_s = "zsl", report_out = "runs/figures";
  bool figures = false;
  report->add_option("--store", opts.store_path);
  report->add_option("--dataset", opts.dataset);
  report->add_option("--table", table_s)->check(CLI::IsMember({"zsl", "f1", "tre"}));
  report->add_flag("--figures", figures, "emit figure images + sidecars");
  report->add_option("--out", report_out);
  report->set_config("--config");

  CLI11_PARSE(app, argc, argv);

  try {
    harness::ResultsStore store(opts.store_path);

    if (gen->parsed()) {
      data::DatasetBundle b = data::generate_synthetic(sspec);
      data::write_bundle(b, gen_out);
      std::cout << "wrote " << b.num_images() << " images, " << b.num_classes() << " classes ("
                << b.split.train_classes.size() << " train / " << b.split.test_classes.size()
                << " test), " << b.num_attributes() << " attributes to " << gen_out << "\n";
      return 0;
    }

    if (train->parsed()) {
      data::DatasetBundle bundle = load_bundle(opts);
      tcfg.objective.kind = pretrain::objective_from_name(objective_name_s);
      tcfg.objective.local_loss = pretrain::local_loss_from_name(local_loss_s);
      tcfg.seed = opts.seed;
      tcfg.resize_to = opts.resize_to;
      tcfg.zfs_strict = opts.zfs_strict;
      const int input = train_input > 0 ? train_input : data::crop_size_for(opts.resize_to);
      tcfg.encoder = encoder_s == "basic" ? enc::EncoderSpec::basic(input)
                                          : enc::EncoderSpec::alexnet(input);
      tcfg.out_dir = train_out;
      auto trained = pretrain::train_encoder(tcfg, bundle);
      auto cfg = fingerprint_map({{"cmd", "train"},
                                  {"objective", objective_name_s},
                                  {"local_loss", local_loss_s},
                                  {"encoder", encoder_s},
                                  {"dataset", opts.dataset},
                                  {"steps", std::to_string(tcfg.steps)},
                                  {"batch", std::to_string(tcfg.batch)},
                                  {"lr", std::to_string(tcfg.lr)},
                                  {"resize", std::to_string(opts.resize_to)},
                                  {"seed", std::to_string(opts.seed)}});
      append_metric(store, opts, cfg, objective_name_s, encoder_s, local_loss_s, "final_loss",
                    trained.result.last_losses["total"], trained.result.wall_seconds);
      std::cout << "checkpoint: " << trained.result.checkpoint_path << "\n";
      return 0;
    }

    if (evalz->parsed()) {
      data::DatasetBundle bundle = load_bundle(opts);
      json prov;
      enc::Encoder<float> encoder = load_encoder_checked(ckpt_path, opts.zfs_strict, &prov);
      zsl::EvalOptions eopts;
      eopts.tap = tap_from_name(tap_s);
      eopts.kind = feature_s == "global"     ? zsl::FeatureKind::kGlobal
                   : feature_s == "avg-repr" ? zsl::FeatureKind::kAverageRepresentations
                                             : zsl::FeatureKind::kAveragePredictions;
      proto.seed = opts.seed;
      eopts.proto = proto;
      eopts.resize_to = opts.resize_to;
      const uint64_t before = encoder.state_checksum();
      zsl::ZslResult res = zsl::zsl_eval(encoder, bundle, eopts);
      ZFS_CHECK(encoder.state_checksum() == before,
                "frozen-encoder contract violated during evaluation");
      auto cfg = fingerprint_map({{"cmd", "eval-zsl"},
                                  {"checkpoint", ckpt_path},
                                  {"feature", feature_s},
                                  {"tap", tap_s},
                                  {"proto_steps", std::to_string(proto.steps)},
                                  {"seed", std::to_string(opts.seed)}});
      const std::string objective = prov.value("objective", "unknown");
      const std::string local_loss = prov.value("local_loss", "none");
      const std::string enc_name = family_name(encoder.spec().family);
      std::string metric = "zsl_top1";
      if (feature_s != "global") metric += feature_s == "avg-repr" ? "_avg_repr" : "_avg_pred";
      if (tap_s != "local") metric += tap_s == "pre-pool" ? "_pre_pool" : "_post_pool";
      append_metric(store, opts, cfg, objective, enc_name, local_loss, metric, res.top1, 0);
      fs::create_directories(eval_out);
      std::ofstream per_class(eval_out + "/per_class.csv");
      per_class << "class,accuracy\n";
      for (size_t i = 0; i < res.test_classes.size(); ++i)
        per_class << res.test_classes[i] << "," << res.per_class[i] << "\n";
      std::cout << metric << " = " << res.top1 << "\n";
      return 0;
    }

    if (probe->parsed()) {
      data::DatasetBundle bundle = load_bundle(opts);
      ZFS_CHECK(bundle.parts.has_value(), "dataset has no part annotations");
      json prov;
      enc::Encoder<float> encoder = load_encoder_checked(ckpt_path, opts.zfs_strict, &prov);
      const uint64_t before = encoder.state_checksum();
      auto train_idx = bundle.indices_of_classes(bundle.split.train_classes);
      auto test_idx = bundle.indices_of_classes(bundle.split.test_classes);
      auto ftr = pretrain::extract_features(encoder, bundle, train_idx, opts.resize_to);
      auto fte = pretrain::extract_features(encoder, bundle, test_idx, opts.resize_to);
      auto maps_tr = probes::projected_maps_for(bundle, train_idx, ftr.geometry, opts.resize_to);
      auto maps_te = probes::projected_maps_for(bundle, test_idx, fte.geometry, opts.resize_to);
      pcfg.seed = opts.seed;
      probes::PartProbeSet set = probes::train_part_probes(ftr.local, maps_tr, pcfg);
      probes::PartsF1 f1 = probes::parts_f1(set, fte.local, maps_te);
      ZFS_CHECK(encoder.state_checksum() == before,
                "probe training must not touch encoder parameters");
      auto cfg = fingerprint_map({{"cmd", "probe-parts"},
                                  {"checkpoint", ckpt_path},
                                  {"steps", std::to_string(pcfg.steps)},
                                  {"seed", std::to_string(opts.seed)}});
      append_metric(store, opts, cfg, prov.value("objective", "unknown"),
                    family_name(encoder.spec().family), prov.value("local_loss", "none"),
                    "parts_f1", f1.mean_f1, 0);
      fs::create_directories(probe_out);
      std::ofstream per_part(probe_out + "/per_part_f1.tsv");
      for (size_t i = 0; i < f1.per_part.size(); ++i)
        per_part << i << "\t" << f1.per_part[i]
                 << (f1.zero_positive_flag[i] ? "\tno-positives" : "") << "\n";
      std::cout << "parts_f1 = " << f1.mean_f1 << "\n";
      return 0;
    }

    if (mit->parsed()) {
      data::DatasetBundle bundle = load_bundle(opts);
      json prov;
      enc::Encoder<float> encoder = load_encoder_checked(ckpt_path, opts.zfs_strict, &prov);
      auto train_idx = bundle.indices_of_classes(bundle.split.train_classes);
      auto feats = pretrain::extract_features(encoder, bundle, train_idx, opts.resize_to);
      mi::StatisticsNetwork statnet(feats.global.dim(1), feats.local.dim(1), mi_hidden,
                                    opts.seed);
      mcfg.seed = opts.seed;
      const double bound = mi::train_mine(statnet, mi::feature_sampler(feats), mcfg);
      if (auto dir = fs::path(statnet_out).parent_path(); !dir.empty())
        fs::create_directories(dir);
      mi::save_statnet(statnet_out, statnet);
      auto cfg = fingerprint_map({{"cmd", "mi-train"},
                                  {"checkpoint", ckpt_path},
                                  {"steps", std::to_string(mcfg.steps)},
                                  {"seed", std::to_string(opts.seed)}});
      append_metric(store, opts, cfg, prov.value("objective", "unknown"),
                    family_name(encoder.spec().family), prov.value("local_loss", "none"),
                    "mine_bound", bound, 0);
      std::cout << "estimated bound = " << bound << ", statnet: " << statnet_out << "\n";
      return 0;
    }

    if (viz->parsed()) {
      data::DatasetBundle bundle = load_bundle(opts);
      enc::Encoder<float> encoder = load_encoder_checked(ckpt_path, opts.zfs_strict);
      mi::StatisticsNetwork statnet = mi::load_statnet(statnet_path);
      auto feats =
          pretrain::extract_features(encoder, bundle, {image_a, image_b}, opts.resize_to);
      nn::Tensor<float> g({feats.global.dim(1)});
      std::copy(feats.global.data(), feats.global.data() + g.numel(), g.data());
      const int64_t c = feats.local.dim(1), h = feats.local.dim(2), w = feats.local.dim(3);
      nn::Tensor<float> l({c, h, w});
      std::copy(feats.local.data() + c * h * w, feats.local.data() + 2 * c * h * w, l.data());
      mi::PMIHeatmap map = mi::pmi_heatmap(statnet, g, l);
      map.source_image = image_a;
      map.target_image = image_b;
      fs::create_directories(viz_out);
      const std::string prefix =
          viz_out + "/pmi_" + std::to_string(image_a) + "_" + std::to_string(image_b);
      img::Image target =
          data::eval_view(bundle.images.get(image_b), data::eval_crop_frame(opts.resize_to));
      mi::write_heatmap_artifacts(prefix, map, target);
      std::cout << "heatmap artifacts: " << prefix << "_{overlay.ppm,raw.pgm,scores.tsv}\n";
      return 0;
    }

    if (study->parsed()) {
      data::DatasetBundle bundle = load_bundle(opts);
      ZFS_CHECK(bundle.parts.has_value(), "dataset has no part annotations");
      json prov;
      enc::Encoder<float> encoder = load_encoder_checked(ckpt_path, opts.zfs_strict, &prov);
      mi::StatisticsNetwork statnet = mi::load_statnet(statnet_path);
      auto test_idx = bundle.indices_of_classes(bundle.split.test_classes);
      auto fte = pretrain::extract_features(encoder, bundle, test_idx, opts.resize_to);
      auto maps = probes::projected_maps_for(bundle, test_idx, fte.geometry, opts.resize_to);
      rscfg.seed = opts.seed;
      rscfg.resize_to = opts.resize_to;
      mi::RatioStudyResult res = mi::ratio_correlation_study(statnet, fte, bundle, maps, rscfg);
      fs::create_directories(study_out);
      std::ofstream rows(study_out + "/pairs.csv");
      rows << "image_a,image_b,parts_ratio,attr_similarity,ssim\n";
      for (const auto& r : res.rows)
        rows << r.image_a << "," << r.image_b << "," << r.ratio << "," << r.attr_sim << ","
             << r.ssim << "\n";
      auto cfg = fingerprint_map({{"cmd", "mi-study"},
                                  {"checkpoint", ckpt_path},
                                  {"pairs", std::to_string(rscfg.n_pairs)},
                                  {"seed", std::to_string(opts.seed)}});
      const std::string objective = prov.value("objective", "unknown");
      const std::string enc_name = family_name(encoder.spec().family);
      const std::string ll = prov.value("local_loss", "none");
      append_metric(store, opts, cfg, objective, enc_name, ll, "ratio_corr_attr", res.r_attr, 0);
      append_metric(store, opts, cfg, objective, enc_name, ll, "ratio_corr_ssim", res.r_ssim, 0);
      std::cout << "r_attr = " << res.r_attr << " (p " << res.p_attr << "), r_ssim = "
                << res.r_ssim << " (p " << res.p_ssim << ") over " << res.rows.size()
                << " pairs\n";
      return 0;
    }

    if (tre_cmd->parsed()) {
      data::DatasetBundle bundle = load_bundle(opts);
      json prov;
      enc::Encoder<float> encoder = load_encoder_checked(ckpt_path, opts.zfs_strict, &prov);
      auto train_idx = bundle.indices_of_classes(bundle.split.train_classes);
      auto test_idx = bundle.indices_of_classes(bundle.split.test_classes);
      auto ftr = pretrain::extract_features(encoder, bundle, train_idx, opts.resize_to);
      auto fte = pretrain::extract_features(encoder, bundle, test_idx, opts.resize_to);
      nn::Tensor<float> bin =
          tre::binarize_attributes(bundle.attributes, bundle.split.train_classes);
      trcfg.seed = opts.seed;
      tre::TreReport rep =
          tre::tre_ratio(ftr.global, fte.global, bin, ftr.labels, fte.labels, trcfg);
      auto cfg = fingerprint_map({{"cmd", "tre"},
                                  {"checkpoint", ckpt_path},
                                  {"draws", std::to_string(trcfg.draws)},
                                  {"seed", std::to_string(opts.seed)}});
      const std::string objective = prov.value("objective", "unknown");
      const std::string enc_name = family_name(encoder.spec().family);
      const std::string ll = prov.value("local_loss", "none");
      append_metric(store, opts, cfg, objective, enc_name, ll, "tre_ratio", rep.ratio, 0);
      append_metric(store, opts, cfg, objective, enc_name, ll, "tre_test_attr",
                    rep.tre_test_attr, 0);
      append_metric(store, opts, cfg, objective, enc_name, ll, "tre_train_attr",
                    rep.tre_train_attr, 0);
      std::cout << "tre_ratio = " << rep.ratio << " (attr " << rep.tre_test_attr << " / random "
                << rep.tre_test_rand << ")\n";
      return 0;
    }

    if (grid->parsed()) {
      harness::GridSpec spec = harness::parse_grid_spec(grid_spec_path);
      auto cells = harness::expand_grid(spec);
      if (dry_run) {
        std::cout << "grid cells: " << cells.size() << "\n";
        return 0;
      }
      const std::string root = resolve_data_root(opts.data_root);
      for (const auto& cell : cells) {
        const std::string cell_dir = grid_out + "/" + cell.dataset + "_" + cell.objective + "_" +
                                     cell.local_loss + "_" + cell.encoder + "_s" +
                                     std::to_string(cell.seed);
        std::cout << "[grid] " << cell_dir << std::endl;
        data::DatasetBundle bundle = data::load_zsl_dataset(root, cell.dataset);
        pretrain::TrainConfig cfg;
        cfg.objective.kind = pretrain::objective_from_name(cell.objective);
        cfg.objective.local_loss = pretrain::local_loss_from_name(cell.local_loss);
        cfg.seed = cell.seed;
        cfg.steps = grid_steps;
        cfg.batch = 16;
        cfg.resize_to = opts.resize_to;
        const int input = data::crop_size_for(opts.resize_to);
        cfg.encoder = cell.encoder == "basic" ? enc::EncoderSpec::basic(input)
                                              : enc::EncoderSpec::alexnet(input);
        cfg.out_dir = cell_dir;
        auto trained = pretrain::train_encoder(cfg, bundle);
        trained.encoder.set_trainable(false);
        zsl::EvalOptions eopts;
        eopts.resize_to = opts.resize_to;
        eopts.proto.seed = cell.seed;
        zsl::ZslResult res = zsl::zsl_eval(trained.encoder, bundle, eopts);
        CommonOpts cell_opts = opts;
        cell_opts.dataset = cell.dataset;
        cell_opts.seed = cell.seed;
        auto fp = fingerprint_map({{"cmd", "grid-cell"},
                                   {"objective", cell.objective},
                                   {"local_loss", cell.local_loss},
                                   {"encoder", cell.encoder},
                                   {"dataset", cell.dataset},
                                   {"seed", std::to_string(cell.seed)}});
        append_metric(store, cell_opts, fp, cell.objective, cell.encoder, cell.local_loss,
                      "zsl_top1", res.top1, trained.result.wall_seconds);
      }
      return 0;
    }

    if (report->parsed()) {
      auto records = store.load_all();
      if (figures) {
        harness::emit_figures(records, report_out);
        std::cout << "figures written to " << report_out << "\n";
      } else {
        const std::string metric = table_s == "zsl"  ? "zsl_top1"
                                   : table_s == "f1" ? "parts_f1"
                                                     : "tre_ratio";
        std::cout << harness::render_zsl_table(records, opts.dataset, metric);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
