#include "zfs/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace zfs::data {

namespace fs = std::filesystem;

namespace {

constexpr int kNumShapes = 4;

// Attributes are coded as (shape, color) pairs with colors reused across
// shapes, so neither a color histogram nor a fixed location identifies an
// attribute on its own.
const float kPalette[4][3] = {{0.92f, 0.15f, 0.15f},
                              {0.18f, 0.35f, 0.95f},
                              {0.15f, 0.80f, 0.25f},
                              {0.95f, 0.80f, 0.12f}};

bool shape_hit(int shape, int dy, int dx, int g) {
  // Local coordinates [0, g) x [0, g), center c. Shapes are sized to cover
  // roughly equal pixel areas so a global color histogram carries no
  // attribute identity.
  const float c = (g - 1) / 2.0f;
  const float ry = dy - c, rx = dx - c;
  const float r = g / 2.0f;
  switch (shape) {
    case 0:  // upright rectangle
      return std::abs(ry) <= 0.37f * g && std::abs(rx) <= 0.28f * g;
    case 1:  // disc
      return ry * ry + rx * rx <= r * r * 0.67f;
    case 2:  // triangle (filled, apex up)
      return dy >= std::abs(rx) * 2.0f - 0.5f;
    case 3:  // cross
      return std::abs(ry) <= g / 6.0f || std::abs(rx) <= g / 6.0f;
    default:
      return true;
  }
}

void draw_glyph(img::Image& im, int attr, int cy, int cx, int g) {
  const int shape = attr % kNumShapes;
  const float* col = kPalette[(attr / kNumShapes) % 4];
  const int half = g / 2;
  for (int dy = 0; dy < g; ++dy)
    for (int dx = 0; dx < g; ++dx) {
      int y = cy - half + dy, x = cx - half + dx;
      if (y < 0 || x < 0 || y >= im.h || x >= im.w) continue;
      if (!shape_hit(shape, dy, dx, g)) continue;
      for (int c = 0; c < 3; ++c) im.at(c, y, x) = col[c];
    }
}

nn::Tensor<float> sample_attribute_matrix(const SyntheticSpec& spec, nn::Rng& rng) {
  const int c = spec.num_classes, a = spec.num_attributes;
  // Attributes fall into color groups of kNumShapes. True attributes are
  // spread as evenly as possible across groups so per-color glyph counts are
  // (near-)constant across classes and carry no class identity.
  const int groups = (a + kNumShapes - 1) / kNumShapes;
  std::vector<std::vector<int>> group_members(groups);
  for (int j = 0; j < a; ++j) group_members[j / kNumShapes].push_back(j);

  for (int attempt = 0; attempt < 200; ++attempt) {
    nn::Tensor<float> m({c, a});
    std::set<std::vector<int>> seen;
    bool ok = true;
    // With min_true == 1 the first min(A, C) classes are singletons (one
    // attribute each): they anchor per-attribute structure in any encoder
    // trained with class supervision. Remaining classes are max_true-sized
    // combinations balanced across color groups.
    const int singles = spec.min_true == 1 ? std::min(a, c) : 0;
    for (int ci = 0; ci < singles; ++ci) {
      m.at2(ci, ci) = 1.f;
      std::vector<int> key(a, 0);
      key[ci] = 1;
      seen.insert(key);
    }
    for (int ci = singles; ci < c && ok; ++ci) {
      bool placed = false;
      for (int redraw = 0; redraw < 64 && !placed; ++redraw) {
        int k = spec.max_true;
        std::vector<int> per_group(groups, k / groups);
        for (int rem = 0; rem < k % groups; ++rem)
          ++per_group[static_cast<size_t>(rng.randint(groups))];
        std::vector<int> key(a, 0);
        bool fits = true;
        for (int gi = 0; gi < groups && fits; ++gi) {
          std::vector<int> order = group_members[gi];
          if (per_group[gi] > static_cast<int>(order.size())) {
            fits = false;
            break;
          }
          rng.shuffle(order.begin(), order.end());
          for (int j = 0; j < per_group[gi]; ++j) key[order[j]] = 1;
        }
        if (!fits || !seen.insert(key).second) continue;  // duplicate class vector
        for (int j = 0; j < a; ++j) m.at2(ci, j) = static_cast<float>(key[j]);
        placed = true;
      }
      ok = placed;
    }
    if (!ok) continue;
    // every attribute must be learnable: used by at least two classes, or by
    // its own singleton class
    for (int j = 0; j < a && ok; ++j) {
      int uses = 0;
      for (int ci = 0; ci < c; ++ci) uses += m.at2(ci, j) > 0 ? 1 : 0;
      if (uses == 0 || (uses == 1 && j >= singles)) ok = false;
    }
    if (ok) return m;
  }
  throw std::runtime_error("could not sample a feasible synthetic attribute matrix");
}

}  // namespace

DatasetBundle generate_synthetic(const SyntheticSpec& spec) {
  ZFS_CHECK(spec.num_attributes >= 4, "synthetic spec needs at least 4 attributes");
  ZFS_CHECK(spec.num_classes > spec.num_test_classes && spec.num_test_classes >= 2,
            "synthetic split infeasible");
  ZFS_CHECK(spec.max_true >= spec.min_true && spec.min_true >= 1 &&
                spec.max_true <= spec.num_attributes,
            "synthetic true-attribute range infeasible");

  const int a = spec.num_attributes;
  const int grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(a))));
  const int grid_rows = (a + grid_cols - 1) / grid_cols;
  const int cell_w = spec.image_size / grid_cols;
  const int cell_h = spec.image_size / grid_rows;
  ZFS_CHECK(spec.glyph_size <= std::min(cell_w, cell_h),
            "synthetic spec infeasible: glyphs do not fit the canvas");

  nn::Rng rng(spec.seed);
  nn::Rng attr_rng = rng.fork("attributes");
  nn::Rng split_rng = rng.fork("split");
  nn::Rng render_rng = rng.fork("render");

  DatasetBundle b;
  b.name = "synthetic";
  b.attributes_raw = sample_attribute_matrix(spec, attr_rng);
  b.attributes = b.attributes_raw;
  normalize_attribute_rows(b.attributes);

  // split: seeded shuffle over the full-combination classes (singleton
  // classes always train), last num_test_classes become unseen
  std::vector<int64_t> eligible, always_train;
  for (int i = 0; i < spec.num_classes; ++i) {
    int k = 0;
    for (int j = 0; j < a; ++j) k += b.attributes_raw.at2(i, j) > 0 ? 1 : 0;
    (k == spec.max_true ? eligible : always_train).push_back(i);
  }
  ZFS_CHECK(static_cast<int>(eligible.size()) > spec.num_test_classes,
            "synthetic split infeasible: too few full-combination classes");
  split_rng.shuffle(eligible.begin(), eligible.end());
  std::vector<int64_t> order = always_train;
  order.insert(order.end(), eligible.begin(), eligible.end());
  b.split.train_classes.assign(order.begin(), order.end() - spec.num_test_classes);
  b.split.test_classes.assign(order.end() - spec.num_test_classes, order.end());
  std::sort(b.split.train_classes.begin(), b.split.train_classes.end());
  std::sort(b.split.test_classes.begin(), b.split.test_classes.end());

  PartAnnotations ann;
  ann.num_parts = a;

  std::vector<img::Image> images;
  const int jitter_y = std::max(0, (cell_h - spec.glyph_size) / 2 - 1);
  const int jitter_x = std::max(0, (cell_w - spec.glyph_size) / 2 - 1);
  for (int ci = 0; ci < spec.num_classes; ++ci) {
    for (int k = 0; k < spec.images_per_class; ++k) {
      img::Image im(spec.image_size, spec.image_size);
      // nuisance background: per-image grayscale gradient
      const float g0 = 0.30f + 0.30f * static_cast<float>(render_rng.uniform());
      const float g1 = 0.30f + 0.30f * static_cast<float>(render_rng.uniform());
      const bool horizontal = render_rng.bernoulli(0.5);
      for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x) {
          float t = horizontal ? static_cast<float>(x) / (im.w - 1)
                               : static_cast<float>(y) / (im.h - 1);
          const float v = g0 * (1 - t) + g1 * t;
          for (int c = 0; c < 3; ++c) im.at(c, y, x) = v;
        }

      const int glyph_px = spec.glyph_size;

      // glyph placement is a fresh random cell assignment per image, so
      // location never identifies an attribute
      std::vector<int> cell_of(static_cast<size_t>(grid_rows) * grid_cols);
      for (size_t ii = 0; ii < cell_of.size(); ++ii) cell_of[ii] = static_cast<int>(ii);
      render_rng.shuffle(cell_of.begin(), cell_of.end());

      std::vector<PartClick> clicks(a);
      for (int j = 0; j < a; ++j) {
        const int cell = cell_of[static_cast<size_t>(j)];
        const int row = cell / grid_cols, col = cell % grid_cols;
        const int base_cy = row * cell_h + cell_h / 2;
        const int base_cx = col * cell_w + cell_w / 2;
        const int cy =
            base_cy + (jitter_y > 0 ? static_cast<int>(render_rng.randint(2 * jitter_y + 1)) -
                                          jitter_y
                                    : 0);
        const int cx =
            base_cx + (jitter_x > 0 ? static_cast<int>(render_rng.randint(2 * jitter_x + 1)) -
                                          jitter_x
                                    : 0);
        clicks[j].part = j;
        if (b.attributes_raw.at2(ci, j) > 0) {
          draw_glyph(im, j, cy, cx, glyph_px);
          clicks[j].x = static_cast<float>(cx);
          clicks[j].y = static_cast<float>(cy);
          clicks[j].visible = true;
        }
      }
      images.push_back(std::move(im));
      ann.clicks.push_back(std::move(clicks));
      b.labels.push_back(ci);
    }
  }
  b.images.set_memory(std::move(images));
  b.parts = std::move(ann);
  return b;
}

void write_bundle(const DatasetBundle& bundle, const std::string& root) {
  fs::create_directories(root + "/images");
  std::ofstream manifest(root + "/manifest.tsv");
  ZFS_CHECK(manifest.good(), "cannot write manifest under " + root);
  for (int64_t i = 0; i < bundle.num_images(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "images/img_%06d.ppm", static_cast<int>(i));
    img::write_ppm(root + "/" + name, bundle.images.get(i));
    manifest << name << "\t" << bundle.labels[i] << "\n";
  }

  std::ofstream attrs(root + "/attributes.txt");
  for (int64_t c = 0; c < bundle.num_classes(); ++c) {
    for (int64_t j = 0; j < bundle.num_attributes(); ++j)
      attrs << (j ? " " : "") << bundle.attributes_raw.at2(c, j);
    attrs << "\n";
  }

  std::ofstream split(root + "/split.txt");
  split << "train: ";
  for (size_t i = 0; i < bundle.split.train_classes.size(); ++i)
    split << (i ? "," : "") << bundle.split.train_classes[i];
  split << "\ntest: ";
  for (size_t i = 0; i < bundle.split.test_classes.size(); ++i)
    split << (i ? "," : "") << bundle.split.test_classes[i];
  split << "\n";

  if (bundle.parts) {
    std::ofstream parts(root + "/parts.txt");
    for (size_t i = 0; i < bundle.parts->clicks.size(); ++i)
      for (const PartClick& c : bundle.parts->clicks[i])
        parts << i << " " << c.part << " " << c.x << " " << c.y << " " << (c.visible ? 1 : 0)
              << "\n";
  }
}

}  // namespace zfs::data
