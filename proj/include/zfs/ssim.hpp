#pragma once

#include "zfs/image.hpp"

namespace zfs::mi {

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
  double dynamic_range = 1.0;  // pixels live in [0,1]
};

/// Mean structural similarity over all fully-contained Gaussian windows of
/// the grayscale-converted images. Symmetric in its arguments.
double ssim(const img::Image& a, const img::Image& b, const SsimParams& params = {});

}  // namespace zfs::mi
