#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zfs/geometry.hpp"
#include "zfs/image.hpp"
#include "zfs/nn/rng.hpp"
#include "zfs/nn/tensor.hpp"

namespace zfs::data {

/// One annotator click for one part of one image, in raw pixel coordinates.
struct PartClick {
  int part = 0;
  float x = 0, y = 0;
  bool visible = false;
};

struct PartAnnotations {
  int num_parts = 0;
  std::vector<std::vector<PartClick>> clicks;  // per image
};

/// Boolean presence maps for one image: num_parts planes of h x w.
struct PartMaps {
  int num_parts = 0, h = 0, w = 0;
  std::vector<uint8_t> m;

  PartMaps() = default;
  PartMaps(int parts, int height, int width)
      : num_parts(parts), h(height), w(width),
        m(static_cast<size_t>(parts) * height * width, 0) {}
  uint8_t& at(int p, int y, int x) { return m[(static_cast<size_t>(p) * h + y) * w + x]; }
  uint8_t at(int p, int y, int x) const { return m[(static_cast<size_t>(p) * h + y) * w + x]; }
};

struct Split {
  std::vector<int64_t> train_classes, test_classes;
};

/// Images either held in memory (synthetic) or read from disk on demand.
class ImageStore {
 public:
  void set_memory(std::vector<img::Image> images) { mem_ = std::move(images); }
  void set_paths(std::string root, std::vector<std::string> paths) {
    root_ = std::move(root);
    paths_ = std::move(paths);
  }
  int64_t size() const {
    return mem_.empty() ? static_cast<int64_t>(paths_.size()) : static_cast<int64_t>(mem_.size());
  }
  img::Image get(int64_t i) const {
    if (!mem_.empty()) return mem_[static_cast<size_t>(i)];
    return img::read_ppm(root_ + "/" + paths_[static_cast<size_t>(i)]);
  }

 private:
  std::vector<img::Image> mem_;
  std::string root_;
  std::vector<std::string> paths_;
};

struct DatasetBundle {
  std::string name;
  ImageStore images;
  std::vector<int64_t> labels;           // per image, class index
  nn::Tensor<float> attributes;          // [num_classes, num_attributes], rows l2-normalized
  nn::Tensor<float> attributes_raw;      // as read from disk / generated
  Split split;
  std::optional<PartAnnotations> parts;

  int64_t num_classes() const { return attributes.dim(0); }
  int64_t num_attributes() const { return attributes.dim(1); }
  int64_t num_images() const { return static_cast<int64_t>(labels.size()); }

  std::vector<int64_t> indices_of_classes(const std::vector<int64_t>& classes) const;
};

/// Expected counts for the standard benchmarks; loads of a dataset with one
/// of these names are validated against them.
struct DatasetStats {
  int64_t images, attributes, classes, train_classes, test_classes;
};
std::optional<DatasetStats> known_dataset_stats(const std::string& name);

/// Layout under root: manifest.tsv (image_path<TAB>class_index per line),
/// attributes.txt (one class per line), split.txt ("train: ..." / "test: ..."),
/// optional parts.txt (image_index part_index x y visible).
DatasetBundle load_zsl_dataset(const std::string& root, const std::string& name);

/// In-place row normalization to unit Euclidean norm. Throws naming the row
/// index on an all-zero row.
void normalize_attribute_rows(nn::Tensor<float>& m);

// ---- preprocessing ----

inline int crop_size_for(int resize_to) {
  return static_cast<int>(std::lround(0.875 * resize_to));
}

/// Resize to resize_to, crop to 0.875*resize_to (random offset in train mode,
/// centered in eval mode), scale pixels to [-1, 1]. Output [3, S, S].
nn::Tensor<float> preprocess(const img::Image& im, bool train, nn::Rng& rng, int resize_to = 128);

/// Offsets used by eval-mode preprocessing; needed to align annotations.
struct CropFrame {
  int resize_to, crop, off_y, off_x;
};
CropFrame eval_crop_frame(int resize_to);

/// The image as the encoder sees it in eval mode (resized + center-cropped),
/// still in [0,1] pixel range.
img::Image eval_view(const img::Image& im, const CropFrame& frame);

/// Map raw-image clicks into the eval crop frame. Clicks falling outside the
/// crop become invisible.
std::vector<PartClick> transform_clicks_to_crop(const std::vector<PartClick>& clicks, int raw_h,
                                                int raw_w, const CropFrame& frame);

// ---- part maps ----

/// Union of squares of the given side centered at each visible click
/// ([c-side/2, c+side/2-1] per axis), clipped to bounds.
PartMaps build_part_maps(const std::vector<PartClick>& clicks, int num_parts, int h, int w,
                         int side = 10);

/// Feature-level projection: a cell is true iff its receptive window overlaps
/// any true pixel of the image-level map.
PartMaps project_part_maps(const PartMaps& maps, const enc::FeatureGeometry& geom, int input_h,
                           int input_w);

/// OR across all parts of a projected map -> single plane [h*w].
std::vector<uint8_t> any_part_union(const PartMaps& projected);

}  // namespace zfs::data
