#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace zfs::img {

/// RGB image, channel-major float storage (3 x h x w), values in [0,1].
struct Image {
  int h = 0, w = 0;
  std::vector<float> data;  // size 3*h*w

  Image() = default;
  Image(int height, int width) : h(height), w(width), data(3u * height * width, 0.f) {}

  float& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * h + y) * w + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * h + y) * w + x]; }
  bool empty() const { return data.empty(); }
};

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& im);

/// Grayscale buffer h*w used by SSIM and heatmap rendering.
void write_pgm(const std::string& path, const std::vector<float>& gray, int h, int w);

Image resize_bilinear(const Image& im, int out_h, int out_w);
Image crop(const Image& im, int y0, int x0, int ch, int cw);

/// Rec. 601 luma.
std::vector<float> to_gray(const Image& im);

}  // namespace zfs::img
