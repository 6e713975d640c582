#include "zfs/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "zfs/nn/tensor.hpp"

namespace zfs::img {

namespace {

int read_pnm_token(std::istream& in) {
  // Skips whitespace and '#' comments between header tokens.
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = 0;
  in >> v;
  return v;
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  ZFS_CHECK(in.good(), "cannot open image: " + path);
  std::string magic;
  in >> magic;
  ZFS_CHECK(magic == "P6" || magic == "P5", "unsupported image format in " + path);
  const int channels = magic == "P6" ? 3 : 1;
  int w = read_pnm_token(in);
  int h = read_pnm_token(in);
  int maxval = read_pnm_token(in);
  ZFS_CHECK(w > 0 && h > 0 && maxval > 0 && maxval < 65536, "bad PNM header in " + path);
  in.get();  // single whitespace after header
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  ZFS_CHECK(in.gcount() == static_cast<std::streamsize>(raw.size()),
            "truncated image data in " + path);
  Image im(h, w);
  const float inv = 1.f / static_cast<float>(maxval);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        int src_c = channels == 3 ? c : 0;
        im.at(c, y, x) = raw[(static_cast<size_t>(y) * w + x) * channels + src_c] * inv;
      }
  return im;
}

void write_ppm(const std::string& path, const Image& im) {
  std::ofstream out(path, std::ios::binary);
  ZFS_CHECK(out.good(), "cannot write image: " + path);
  out << "P6\n" << im.w << " " << im.h << "\n255\n";
  std::vector<uint8_t> raw(static_cast<size_t>(im.w) * im.h * 3);
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = std::clamp(im.at(c, y, x), 0.f, 1.f);
        raw[(static_cast<size_t>(y) * im.w + x) * 3 + c] =
            static_cast<uint8_t>(std::lround(v * 255.f));
      }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

void write_pgm(const std::string& path, const std::vector<float>& gray, int h, int w) {
  ZFS_CHECK(static_cast<int>(gray.size()) == h * w, "write_pgm size mismatch");
  std::ofstream out(path, std::ios::binary);
  ZFS_CHECK(out.good(), "cannot write image: " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> raw(gray.size());
  for (size_t i = 0; i < gray.size(); ++i)
    raw[i] = static_cast<uint8_t>(std::lround(std::clamp(gray[i], 0.f, 1.f) * 255.f));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

Image resize_bilinear(const Image& im, int out_h, int out_w) {
  ZFS_CHECK(!im.empty() && out_h > 0 && out_w > 0, "resize on empty image");
  if (im.h == out_h && im.w == out_w) return im;
  Image out(out_h, out_w);
  const float sy = static_cast<float>(im.h) / out_h;
  const float sx = static_cast<float>(im.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    float fy = (y + 0.5f) * sy - 0.5f;
    int y0 = static_cast<int>(std::floor(fy));
    float wy = fy - y0;
    int y0c = std::clamp(y0, 0, im.h - 1), y1c = std::clamp(y0 + 1, 0, im.h - 1);
    for (int x = 0; x < out_w; ++x) {
      float fx = (x + 0.5f) * sx - 0.5f;
      int x0 = static_cast<int>(std::floor(fx));
      float wx = fx - x0;
      int x0c = std::clamp(x0, 0, im.w - 1), x1c = std::clamp(x0 + 1, 0, im.w - 1);
      for (int c = 0; c < 3; ++c) {
        float top = im.at(c, y0c, x0c) * (1 - wx) + im.at(c, y0c, x1c) * wx;
        float bot = im.at(c, y1c, x0c) * (1 - wx) + im.at(c, y1c, x1c) * wx;
        out.at(c, y, x) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Image crop(const Image& im, int y0, int x0, int ch, int cw) {
  ZFS_CHECK(y0 >= 0 && x0 >= 0 && y0 + ch <= im.h && x0 + cw <= im.w, "crop out of bounds");
  Image out(ch, cw);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) out.at(c, y, x) = im.at(c, y0 + y, x0 + x);
  return out;
}

std::vector<float> to_gray(const Image& im) {
  std::vector<float> g(static_cast<size_t>(im.h) * im.w);
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x)
      g[static_cast<size_t>(y) * im.w + x] =
          0.299f * im.at(0, y, x) + 0.587f * im.at(1, y, x) + 0.114f * im.at(2, y, x);
  return g;
}

}  // namespace zfs::img
