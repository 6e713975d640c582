#pragma once

#include "zfs/dataset.hpp"

namespace zfs::data {

/// Desk-scale compositional dataset: each attribute is one glyph (shape +
/// color) with a fixed home region; a class renders exactly the glyphs of its
/// true attributes. Part annotations are the glyph centers.
struct SyntheticSpec {
  int num_classes = 24;
  int num_attributes = 16;
  int image_size = 48;
  int glyph_size = 11;
  uint64_t seed = 0;
  int images_per_class = 24;
  int num_test_classes = 6;
  int min_true = 1, max_true = 4;  // true attributes per class
};

DatasetBundle generate_synthetic(const SyntheticSpec& spec);

/// Persist a bundle in the on-disk layout understood by load_zsl_dataset
/// (PPM images + manifest.tsv + attributes.txt + split.txt + parts.txt).
void write_bundle(const DatasetBundle& bundle, const std::string& root);

}  // namespace zfs::data
