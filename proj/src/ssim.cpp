#include "zfs/ssim.hpp"

#include <cmath>
#include <vector>

#include "zfs/nn/tensor.hpp"

namespace zfs::mi {

double ssim(const img::Image& a, const img::Image& b, const SsimParams& p) {
  ZFS_CHECK(a.h == b.h && a.w == b.w, "ssim needs equal image sizes");
  ZFS_CHECK(a.h >= p.window && a.w >= p.window, "ssim image smaller than the window");
  const std::vector<float> ga = img::to_gray(a), gb = img::to_gray(b);
  const int n = p.window;

  std::vector<double> kernel(static_cast<size_t>(n) * n);
  {
    const double c = (n - 1) / 2.0;
    double sum = 0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double d2 = (y - c) * (y - c) + (x - c) * (x - c);
        kernel[static_cast<size_t>(y) * n + x] = std::exp(-d2 / (2 * p.sigma * p.sigma));
        sum += kernel[static_cast<size_t>(y) * n + x];
      }
    for (double& k : kernel) k /= sum;
  }

  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const int oh = a.h - n + 1, ow = a.w - n + 1;
  double total = 0;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double mu_a = 0, mu_b = 0;
      for (int ky = 0; ky < n; ++ky)
        for (int kx = 0; kx < n; ++kx) {
          const double k = kernel[static_cast<size_t>(ky) * n + kx];
          mu_a += k * ga[static_cast<size_t>(y + ky) * a.w + (x + kx)];
          mu_b += k * gb[static_cast<size_t>(y + ky) * a.w + (x + kx)];
        }
      double var_a = 0, var_b = 0, cov = 0;
      for (int ky = 0; ky < n; ++ky)
        for (int kx = 0; kx < n; ++kx) {
          const double k = kernel[static_cast<size_t>(ky) * n + kx];
          const double da = ga[static_cast<size_t>(y + ky) * a.w + (x + kx)] - mu_a;
          const double db = gb[static_cast<size_t>(y + ky) * a.w + (x + kx)] - mu_b;
          var_a += k * da * da;
          var_b += k * db * db;
          cov += k * da * db;
        }
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
  return total / (static_cast<double>(oh) * ow);
}

}  // namespace zfs::mi
