#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "zfs/dataset.hpp"
#include "zfs/encoder.hpp"
#include "zfs/synthetic.hpp"

using namespace zfs;
namespace fs = std::filesystem;

namespace {
std::string temp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("zfs_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}
}  // namespace

TEST_CASE("normalize_attribute_rows") {
  nn::Tensor<float> m({3, 2});
  m.at2(0, 0) = 3;  m.at2(0, 1) = 4;
  m.at2(1, 0) = 1;  m.at2(1, 1) = 0;
  m.at2(2, 0) = 1;  m.at2(2, 1) = 1;
  data::normalize_attribute_rows(m);
  CHECK(m.at2(0, 0) == doctest::Approx(0.6));
  CHECK(m.at2(0, 1) == doctest::Approx(0.8));
  CHECK(m.at2(1, 0) == doctest::Approx(1.0));  // unit row unchanged
  CHECK(m.at2(2, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));

  nn::Tensor<float> sym({1, 4});
  for (int j = 0; j < 4; ++j) sym.at2(0, j) = 1;
  data::normalize_attribute_rows(sym);
  for (int j = 0; j < 4; ++j) CHECK(sym.at2(0, j) == doctest::Approx(0.5));

  // idempotent
  nn::Tensor<float> again = m;
  data::normalize_attribute_rows(again);
  for (int64_t i = 0; i < m.numel(); ++i) CHECK(again[i] == doctest::Approx(m[i]).epsilon(1e-6));

  nn::Tensor<float> zero({2, 3});
  zero.at2(0, 0) = 1;
  CHECK_THROWS_WITH_AS(data::normalize_attribute_rows(zero),
                       doctest::Contains("row 1"), std::runtime_error);
}

TEST_CASE("known dataset stats match the benchmark manifest") {
  auto cub = data::known_dataset_stats("CUB");
  REQUIRE(cub.has_value());
  CHECK(cub->images == 11788);
  CHECK(cub->attributes == 312);
  CHECK(cub->classes == 200);
  CHECK(cub->train_classes == 150);
  CHECK(cub->test_classes == 50);
  auto awa = data::known_dataset_stats("AwA2");
  REQUIRE(awa.has_value());
  CHECK(awa->images == 30475);
  CHECK(awa->attributes == 85);
  CHECK(awa->classes == 50);
  CHECK(awa->train_classes == 40);
  CHECK(awa->test_classes == 10);
  auto sun = data::known_dataset_stats("SUN");
  REQUIRE(sun.has_value());
  CHECK(sun->images == 14340);
  CHECK(sun->attributes == 102);
  CHECK(sun->classes == 717);
  CHECK(sun->train_classes == 645);
  CHECK(sun->test_classes == 72);
  CHECK(!data::known_dataset_stats("synthetic").has_value());
}

TEST_CASE("preprocess crops and scales") {
  // marker pixel at the eval crop origin (8,8) of the 128 resize
  img::Image im(128, 128);
  im.at(0, 8, 8) = 1.f;
  nn::Rng rng(0);
  nn::Tensor<float> out = data::preprocess(im, /*train=*/false, rng, 128);
  CHECK(out.shape() == nn::Shape{3, 112, 112});
  CHECK(out[0] == doctest::Approx(1.f));         // marker landed at (0,0)
  CHECK(out[1] == doctest::Approx(-1.f));        // black elsewhere -> -1
  CHECK(data::crop_size_for(128) == 112);
  CHECK(data::crop_size_for(48) == 42);

  // train-mode offsets stay within [0, 16]^2: corner pixels always come from
  // within the resized image; probe determinism with a fixed seed
  nn::Rng a(5), b(5);
  nn::Tensor<float> t1 = data::preprocess(im, true, a, 128);
  nn::Tensor<float> t2 = data::preprocess(im, true, b, 128);
  for (int64_t i = 0; i < t1.numel(); ++i) REQUIRE(t1[i] == t2[i]);

  img::Image constant(64, 64);
  for (auto& v : constant.data) v = 0.5f;
  nn::Tensor<float> c = data::preprocess(constant, true, a, 128);
  for (int64_t i = 1; i < c.numel(); ++i) REQUIRE(c[i] == c[0]);
  CHECK(c[0] == doctest::Approx(0.f));  // 0.5 maps to 0 in [-1,1]
}

TEST_CASE("build_part_maps center convention and clipping") {
  std::vector<data::PartClick> clicks = {{0, 64.f, 64.f, true}};
  data::PartMaps maps = data::build_part_maps(clicks, 2, 128, 128, 10);
  int count = 0;
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) count += maps.at(0, y, x);
  CHECK(count == 100);
  CHECK(maps.at(0, 59, 59) == 1);  // c-5
  CHECK(maps.at(0, 68, 68) == 1);  // c+4
  CHECK(maps.at(0, 58, 64) == 0);
  CHECK(maps.at(0, 69, 64) == 0);

  // part 1 had no clicks -> empty
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) REQUIRE(maps.at(1, y, x) == 0);

  // corner click clips to at most 6x6 (here 5x5: pixels [0,4])
  std::vector<data::PartClick> corner = {{0, 0.f, 0.f, true}};
  data::PartMaps cm = data::build_part_maps(corner, 1, 64, 64, 10);
  int ccount = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) ccount += cm.at(0, y, x);
  CHECK(ccount == 25);
  CHECK(cm.at(0, 0, 0) == 1);
  CHECK(cm.at(0, 4, 4) == 1);
  CHECK(cm.at(0, 5, 5) == 0);

  std::vector<data::PartClick> invisible = {{0, 10.f, 10.f, false}};
  data::PartMaps im = data::build_part_maps(invisible, 1, 32, 32, 10);
  for (size_t i = 0; i < im.m.size(); ++i) REQUIRE(im.m[i] == 0);
}

namespace {

/// Independent window computation: compose per-stage input ranges instead of
/// using the folded geometry.
std::pair<int64_t, int64_t> compose_window(const std::vector<enc::Stage>& stages, int64_t cell,
                                           int64_t input_size) {
  int64_t lo = cell, hi = cell;
  for (auto it = stages.rbegin(); it != stages.rend(); ++it) {
    lo = lo * it->s - it->p;
    hi = hi * it->s - it->p + it->k - 1;
  }
  return {std::max<int64_t>(0, lo), std::min(input_size - 1, hi)};
}

}  // namespace

TEST_CASE("project_part_maps matches brute-force window enumeration") {
  enc::EncoderSpec spec = enc::EncoderSpec::basic(42);
  enc::FeatureGeometry geom = geometry_at(spec, enc::Tap::kLocal);
  std::vector<enc::Stage> stages;
  for (int i = 0; i <= spec.local_tap; ++i) {
    auto b = spec.blocks()[i];
    stages.push_back({b.k, b.s, b.p});
  }

  nn::Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    data::PartMaps maps(1, 42, 42);
    const int n_pix = 1 + static_cast<int>(rng.randint(5));
    for (int p = 0; p < n_pix; ++p)
      maps.at(0, static_cast<int>(rng.randint(42)), static_cast<int>(rng.randint(42))) = 1;
    data::PartMaps proj = data::project_part_maps(maps, geom, 42, 42);
    for (int fy = 0; fy < proj.h; ++fy)
      for (int fx = 0; fx < proj.w; ++fx) {
        auto [y0, y1] = compose_window(stages, fy, 42);
        auto [x0, x1] = compose_window(stages, fx, 42);
        bool any = false;
        for (int y = static_cast<int>(y0); y <= y1; ++y)
          for (int x = static_cast<int>(x0); x <= x1; ++x) any = any || maps.at(0, y, x);
        REQUIRE(proj.at(0, fy, fx) == (any ? 1 : 0));
      }
  }

  // degenerate cases
  data::PartMaps all_true(1, 42, 42);
  std::fill(all_true.m.begin(), all_true.m.end(), 1);
  data::PartMaps pt = data::project_part_maps(all_true, geom, 42, 42);
  for (auto v : pt.m) REQUIRE(v == 1);
  data::PartMaps all_false(1, 42, 42);
  data::PartMaps pf = data::project_part_maps(all_false, geom, 42, 42);
  for (auto v : pf.m) REQUIRE(v == 0);
}

TEST_CASE("projection commutes with per-part union") {
  enc::FeatureGeometry geom = geometry_at(enc::EncoderSpec::basic(42), enc::Tap::kLocal);
  nn::Rng rng(9);
  data::PartMaps a(1, 42, 42), b(1, 42, 42), u(1, 42, 42);
  for (size_t i = 0; i < a.m.size(); ++i) {
    a.m[i] = rng.bernoulli(0.02);
    b.m[i] = rng.bernoulli(0.02);
    u.m[i] = a.m[i] || b.m[i];
  }
  data::PartMaps pa = data::project_part_maps(a, geom, 42, 42);
  data::PartMaps pb = data::project_part_maps(b, geom, 42, 42);
  data::PartMaps pu = data::project_part_maps(u, geom, 42, 42);
  for (size_t i = 0; i < pu.m.size(); ++i) REQUIRE(pu.m[i] == (pa.m[i] || pb.m[i] ? 1 : 0));
}

TEST_CASE("synthetic generation is deterministic and well-formed") {
  data::SyntheticSpec spec;
  spec.num_classes = 20;
  spec.num_attributes = 12;
  spec.images_per_class = 4;
  spec.num_test_classes = 4;
  spec.seed = 0;
  data::DatasetBundle b1 = data::generate_synthetic(spec);
  data::DatasetBundle b2 = data::generate_synthetic(spec);
  REQUIRE(b1.num_images() == 80);
  for (int64_t i = 0; i < b1.num_images(); ++i) {
    img::Image i1 = b1.images.get(i), i2 = b2.images.get(i);
    REQUIRE(i1.data == i2.data);  // bit-identical regeneration
  }
  for (int64_t i = 0; i < b1.attributes.numel(); ++i)
    REQUIRE(b1.attributes[i] == b2.attributes[i]);

  // class with k true attributes renders exactly k glyphs (visible clicks)
  REQUIRE(b1.parts.has_value());
  for (int64_t i = 0; i < b1.num_images(); ++i) {
    int64_t k = 0;
    for (int64_t j = 0; j < b1.num_attributes(); ++j)
      k += b1.attributes_raw.at2(b1.labels[i], j) > 0 ? 1 : 0;
    int64_t visible = 0;
    for (const auto& c : b1.parts->clicks[i]) visible += c.visible ? 1 : 0;
    REQUIRE(visible == k);
  }

  // splits disjoint, unique class vectors
  for (int64_t c : b1.split.test_classes)
    for (int64_t t : b1.split.train_classes) REQUIRE(c != t);

  data::SyntheticSpec bad = spec;
  bad.glyph_size = 64;
  CHECK_THROWS_AS(data::generate_synthetic(bad), std::runtime_error);
}

TEST_CASE("bundle writes to disk and loads back") {
  data::SyntheticSpec spec;
  spec.num_classes = 12;
  spec.num_attributes = 8;
  spec.images_per_class = 3;
  spec.num_test_classes = 3;
  spec.max_true = 2;
  data::DatasetBundle b = data::generate_synthetic(spec);
  const std::string root = temp_dir("bundle");
  data::write_bundle(b, root);
  data::DatasetBundle loaded = data::load_zsl_dataset(root, "synthetic");
  CHECK(loaded.num_images() == b.num_images());
  CHECK(loaded.num_classes() == b.num_classes());
  CHECK(loaded.labels == b.labels);
  CHECK(loaded.split.train_classes == b.split.train_classes);
  CHECK(loaded.split.test_classes == b.split.test_classes);
  REQUIRE(loaded.parts.has_value());
  CHECK(loaded.parts->num_parts == b.parts->num_parts);
  for (int64_t i = 0; i < loaded.attributes.numel(); ++i)
    CHECK(loaded.attributes[i] == doctest::Approx(b.attributes[i]).epsilon(1e-5));
  // images round-trip through 8-bit quantization
  img::Image orig = b.images.get(0), back = loaded.images.get(0);
  REQUIRE(orig.data.size() == back.data.size());
  for (size_t i = 0; i < orig.data.size(); ++i)
    REQUIRE(std::abs(orig.data[i] - back.data[i]) <= 0.5f / 255.f + 1e-6f);

  // loader errors
  fs::remove(root + "/split.txt");
  CHECK_THROWS_WITH_AS(data::load_zsl_dataset(root, "synthetic"),
                       doctest::Contains("split"), std::runtime_error);
}

TEST_CASE("loader rejects labels referencing unknown classes") {
  const std::string root = temp_dir("badlabel");
  {
    std::ofstream attrs(root + "/attributes.txt");
    attrs << "1 0\n0 1\n";
    std::ofstream manifest(root + "/manifest.tsv");
    manifest << "img.ppm\t7\n";
    std::ofstream split(root + "/split.txt");
    split << "train: 0\ntest: 1\n";
  }
  CHECK_THROWS_WITH_AS(data::load_zsl_dataset(root, "tiny"),
                       doctest::Contains("unknown class"), std::runtime_error);
}

TEST_CASE("click transform maps into the eval crop frame") {
  data::CropFrame frame = data::eval_crop_frame(48);
  CHECK(frame.crop == 42);
  CHECK(frame.off_x == 3);
  std::vector<data::PartClick> clicks = {{0, 24.f, 24.f, true}, {1, 0.f, 0.f, true}};
  auto out = data::transform_clicks_to_crop(clicks, 48, 48, frame);
  CHECK(out[0].visible);
  CHECK(out[0].x == doctest::Approx(21.f));
  CHECK(!out[1].visible);  // fell outside the crop
}
