#include "zfs/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace zfs::data {

namespace fs = std::filesystem;

std::vector<int64_t> DatasetBundle::indices_of_classes(
    const std::vector<int64_t>& classes) const {
  std::set<int64_t> wanted(classes.begin(), classes.end());
  std::vector<int64_t> out;
  for (int64_t i = 0; i < num_images(); ++i)
    if (wanted.count(labels[i])) out.push_back(i);
  return out;
}

std::optional<DatasetStats> known_dataset_stats(const std::string& name) {
  if (name == "CUB") return DatasetStats{11788, 312, 200, 150, 50};
  if (name == "AwA2") return DatasetStats{30475, 85, 50, 40, 10};
  if (name == "SUN") return DatasetStats{14340, 102, 717, 645, 72};
  return std::nullopt;
}

void normalize_attribute_rows(nn::Tensor<float>& m) {
  ZFS_CHECK(m.ndim() == 2, "attribute matrix must be 2-d");
  const int64_t rows = m.dim(0), cols = m.dim(1);
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0;
    for (int64_t c = 0; c < cols; ++c) s += static_cast<double>(m.at2(r, c)) * m.at2(r, c);
    ZFS_CHECK(s > 0, "attribute row " + std::to_string(r) + " is all zeros");
    const float inv = static_cast<float>(1.0 / std::sqrt(s));
    for (int64_t c = 0; c < cols; ++c) m.at2(r, c) *= inv;
  }
}

namespace {

std::vector<int64_t> parse_index_list(const std::string& s) {
  std::vector<int64_t> out;
  std::string tok;
  std::istringstream is(s);
  while (std::getline(is, tok, ',')) {
    if (tok.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(std::stoll(tok));
  }
  return out;
}

}  // namespace

DatasetBundle load_zsl_dataset(const std::string& root, const std::string& name) {
  DatasetBundle b;
  b.name = name;

  // attributes
  {
    std::ifstream in(root + "/attributes.txt");
    ZFS_CHECK(in.good(), "missing attributes.txt under " + root);
    std::vector<std::vector<float>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream is(line);
      std::vector<float> row;
      float v;
      while (is >> v) row.push_back(v);
      if (!row.empty()) rows.push_back(std::move(row));
    }
    ZFS_CHECK(!rows.empty(), "empty attribute matrix in " + root);
    const int64_t c = static_cast<int64_t>(rows.size());
    const int64_t a = static_cast<int64_t>(rows[0].size());
    b.attributes_raw = nn::Tensor<float>({c, a});
    for (int64_t i = 0; i < c; ++i) {
      ZFS_CHECK(static_cast<int64_t>(rows[i].size()) == a, "ragged attribute matrix");
      for (int64_t j = 0; j < a; ++j) b.attributes_raw.at2(i, j) = rows[i][j];
    }
    b.attributes = b.attributes_raw;
    normalize_attribute_rows(b.attributes);
  }

  // manifest
  {
    std::ifstream in(root + "/manifest.tsv");
    ZFS_CHECK(in.good(), "missing manifest.tsv under " + root);
    std::vector<std::string> paths;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto tab = line.find('\t');
      ZFS_CHECK(tab != std::string::npos, "manifest line without tab: " + line);
      paths.push_back(line.substr(0, tab));
      int64_t label = std::stoll(line.substr(tab + 1));
      ZFS_CHECK(label >= 0 && label < b.num_classes(),
                "label " + std::to_string(label) + " references unknown class");
      b.labels.push_back(label);
    }
    b.images.set_paths(root, std::move(paths));
  }

  // split
  {
    std::ifstream in(root + "/split.txt");
    ZFS_CHECK(in.good(), "missing split file under " + root);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("train:", 0) == 0)
        b.split.train_classes = parse_index_list(line.substr(6));
      else if (line.rfind("test:", 0) == 0)
        b.split.test_classes = parse_index_list(line.substr(5));
    }
    ZFS_CHECK(!b.split.train_classes.empty() && !b.split.test_classes.empty(),
              "split file must list train and test classes");
    std::set<int64_t> tr(b.split.train_classes.begin(), b.split.train_classes.end());
    for (int64_t c : b.split.test_classes)
      ZFS_CHECK(!tr.count(c), "class " + std::to_string(c) + " in both splits");
    std::set<int64_t> all = tr;
    all.insert(b.split.test_classes.begin(), b.split.test_classes.end());
    for (int64_t l : b.labels)
      ZFS_CHECK(all.count(l), "label " + std::to_string(l) + " outside train/test classes");
  }

  // parts (optional)
  if (fs::exists(root + "/parts.txt")) {
    std::ifstream in(root + "/parts.txt");
    PartAnnotations ann;
    ann.clicks.resize(b.labels.size());
    std::string line;
    int max_part = -1;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream is(line);
      int64_t image;
      PartClick c;
      int vis;
      is >> image >> c.part >> c.x >> c.y >> vis;
      ZFS_CHECK(!is.fail(), "bad parts line: " + line);
      c.visible = vis != 0;
      ZFS_CHECK(image >= 0 && image < b.num_images(), "parts line references unknown image");
      max_part = std::max(max_part, c.part);
      ann.clicks[static_cast<size_t>(image)].push_back(c);
    }
    ann.num_parts = max_part + 1;
    b.parts = std::move(ann);
  }

  if (auto stats = known_dataset_stats(name)) {
    ZFS_CHECK(b.num_images() == stats->images && b.num_attributes() == stats->attributes &&
                  b.num_classes() == stats->classes &&
                  static_cast<int64_t>(b.split.train_classes.size()) == stats->train_classes &&
                  static_cast<int64_t>(b.split.test_classes.size()) == stats->test_classes,
              name + " counts do not match the dataset manifest");
  }
  return b;
}

CropFrame eval_crop_frame(int resize_to) {
  const int crop = crop_size_for(resize_to);
  const int off = (resize_to - crop) / 2;
  return CropFrame{resize_to, crop, off, off};
}

img::Image eval_view(const img::Image& im, const CropFrame& frame) {
  img::Image resized = img::resize_bilinear(im, frame.resize_to, frame.resize_to);
  return img::crop(resized, frame.off_y, frame.off_x, frame.crop, frame.crop);
}

nn::Tensor<float> preprocess(const img::Image& im, bool train, nn::Rng& rng, int resize_to) {
  ZFS_CHECK(!im.empty(), "preprocess on empty image");
  const int crop = crop_size_for(resize_to);
  img::Image resized = img::resize_bilinear(im, resize_to, resize_to);
  int off_y, off_x;
  if (train) {
    off_y = static_cast<int>(rng.randint(resize_to - crop + 1));
    off_x = static_cast<int>(rng.randint(resize_to - crop + 1));
  } else {
    off_y = off_x = (resize_to - crop) / 2;
  }
  nn::Tensor<float> out({3, crop, crop});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < crop; ++y)
      for (int x = 0; x < crop; ++x)
        out[(static_cast<int64_t>(c) * crop + y) * crop + x] =
            resized.at(c, off_y + y, off_x + x) * 2.f - 1.f;
  return out;
}

std::vector<PartClick> transform_clicks_to_crop(const std::vector<PartClick>& clicks, int raw_h,
                                                int raw_w, const CropFrame& frame) {
  std::vector<PartClick> out;
  out.reserve(clicks.size());
  const float sy = static_cast<float>(frame.resize_to) / raw_h;
  const float sx = static_cast<float>(frame.resize_to) / raw_w;
  for (PartClick c : clicks) {
    if (c.visible) {
      c.x = c.x * sx - frame.off_x;
      c.y = c.y * sy - frame.off_y;
      if (c.x < 0 || c.y < 0 || c.x >= frame.crop || c.y >= frame.crop) c.visible = false;
    }
    out.push_back(c);
  }
  return out;
}

PartMaps build_part_maps(const std::vector<PartClick>& clicks, int num_parts, int h, int w,
                         int side) {
  PartMaps maps(num_parts, h, w);
  const int lo_off = side / 2;  // center convention: [c - side/2, c + side - side/2 - 1]
  for (const PartClick& c : clicks) {
    if (!c.visible) continue;
    ZFS_CHECK(c.part >= 0 && c.part < num_parts, "click part index out of range");
    const int cy = static_cast<int>(std::lround(c.y));
    const int cx = static_cast<int>(std::lround(c.x));
    const int y0 = std::max(0, cy - lo_off), y1 = std::min(h - 1, cy - lo_off + side - 1);
    const int x0 = std::max(0, cx - lo_off), x1 = std::min(w - 1, cx - lo_off + side - 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) maps.at(c.part, y, x) = 1;
  }
  return maps;
}

PartMaps project_part_maps(const PartMaps& maps, const enc::FeatureGeometry& geom, int input_h,
                           int input_w) {
  ZFS_CHECK(maps.h == input_h && maps.w == input_w,
            "part map size does not match encoder input geometry");
  PartMaps out(maps.num_parts, static_cast<int>(geom.h), static_cast<int>(geom.w));
  // Summed-area table per part makes the any-true window test O(1).
  std::vector<int32_t> sat(static_cast<size_t>(input_h + 1) * (input_w + 1));
  for (int p = 0; p < maps.num_parts; ++p) {
    for (int y = 0; y < input_h; ++y)
      for (int x = 0; x < input_w; ++x)
        sat[static_cast<size_t>(y + 1) * (input_w + 1) + (x + 1)] =
            sat[static_cast<size_t>(y) * (input_w + 1) + (x + 1)] +
            sat[static_cast<size_t>(y + 1) * (input_w + 1) + x] -
            sat[static_cast<size_t>(y) * (input_w + 1) + x] + (maps.at(p, y, x) ? 1 : 0);
    for (int fy = 0; fy < out.h; ++fy) {
      auto [y0, y1] = geom.window(fy, input_h);
      for (int fx = 0; fx < out.w; ++fx) {
        auto [x0, x1] = geom.window(fx, input_w);
        if (y0 > y1 || x0 > x1) continue;
        int32_t count = sat[static_cast<size_t>(y1 + 1) * (input_w + 1) + (x1 + 1)] -
                        sat[static_cast<size_t>(y0) * (input_w + 1) + (x1 + 1)] -
                        sat[static_cast<size_t>(y1 + 1) * (input_w + 1) + x0] +
                        sat[static_cast<size_t>(y0) * (input_w + 1) + x0];
        out.at(p, fy, fx) = count > 0 ? 1 : 0;
      }
    }
  }
  return out;
}

std::vector<uint8_t> any_part_union(const PartMaps& projected) {
  std::vector<uint8_t> u(static_cast<size_t>(projected.h) * projected.w, 0);
  for (int p = 0; p < projected.num_parts; ++p)
    for (int y = 0; y < projected.h; ++y)
      for (int x = 0; x < projected.w; ++x)
        if (projected.at(p, y, x)) u[static_cast<size_t>(y) * projected.w + x] = 1;
  return u;
}

}  // namespace zfs::data
