#include "zfs/figures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "zfs/image.hpp"
#include "zfs/tre.hpp"

namespace zfs::harness {

namespace {

struct Canvas {
  img::Image im;
  Canvas(int h, int w) : im(h, w) { std::fill(im.data.begin(), im.data.end(), 1.f); }

  void set(int y, int x, float r, float g, float b) {
    if (y < 0 || x < 0 || y >= im.h || x >= im.w) return;
    im.at(0, y, x) = r;
    im.at(1, y, x) = g;
    im.at(2, y, x) = b;
  }
  void rect(int y0, int x0, int y1, int x1, float r, float g, float b) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(y, x, r, g, b);
  }
  void hline(int y, int x0, int x1, float r, float g, float b) { rect(y, x0, y, x1, r, g, b); }
  void vline(int x, int y0, int y1, float r, float g, float b) { rect(y0, x, y1, x, r, g, b); }
  void dot(int y, int x, int rad, float r, float g, float b) {
    for (int dy = -rad; dy <= rad; ++dy)
      for (int dx = -rad; dx <= rad; ++dx)
        if (dy * dy + dx * dx <= rad * rad) set(y + dy, x + dx, r, g, b);
  }

  // 5x7 bitmap glyphs for annotation text (digits plus "r=. -")
  void text(int y, int x, const std::string& s) {
    static const std::map<char, std::array<uint8_t, 7>> font = {
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
        {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
        {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
        {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
        {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
        {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
        {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
        {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
        {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
        {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    };
    int cx = x;
    for (char c : s) {
      auto it = font.find(c);
      if (it != font.end()) {
        for (int row = 0; row < 7; ++row)
          for (int col = 0; col < 5; ++col)
            if (it->second[row] & (1 << (4 - col))) set(y + row, cx + col, 0, 0, 0);
      }
      cx += 6;
    }
  }

  void save(const std::string& path) { img::write_ppm(path, im); }
};

const float kColors[8][3] = {{0.85f, 0.2f, 0.2f},  {0.2f, 0.55f, 0.85f}, {0.2f, 0.7f, 0.3f},
                             {0.85f, 0.6f, 0.15f}, {0.6f, 0.3f, 0.8f},   {0.3f, 0.7f, 0.7f},
                             {0.8f, 0.4f, 0.6f},   {0.45f, 0.45f, 0.45f}};

struct Key {
  std::string dataset, objective, encoder, local_loss;
  bool operator<(const Key& o) const {
    return std::tie(dataset, objective, encoder, local_loss) <
           std::tie(o.dataset, o.objective, o.encoder, o.local_loss);
  }
};

std::map<Key, double> metric_map(const std::vector<RunRecord>& records,
                                 const std::string& metric) {
  std::map<Key, double> out;
  for (const auto& r : records)
    if (r.metric == metric) out[Key{r.dataset, r.objective, r.encoder, r.local_loss}] = r.value;
  return out;
}

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

void scatter_parts_vs_zsl(const std::vector<RunRecord>& records, const std::string& dir,
                          std::ofstream& sidecar) {
  auto f1 = metric_map(records, "parts_f1");
  auto zsl = metric_map(records, "zsl_top1");
  std::vector<double> xs, ys;
  std::vector<Key> keys;
  for (const auto& [k, v] : f1) {
    auto it = zsl.find(k);
    if (it == zsl.end()) {
      sidecar << "missing\tzsl_top1\t" << k.objective << "/" << k.local_loss << "\n";
      continue;
    }
    xs.push_back(v);
    ys.push_back(it->second);
    keys.push_back(k);
  }
  sidecar << "# parts_f1\tzsl_top1\tobjective\tlocal_loss\n";
  for (size_t i = 0; i < xs.size(); ++i)
    sidecar << xs[i] << "\t" << ys[i] << "\t" << keys[i].objective << "\t" << keys[i].local_loss
            << "\n";

  Canvas cv(320, 420);
  const int m = 40;
  cv.hline(320 - m, m, 420 - m, 0, 0, 0);
  cv.vline(m, m, 320 - m, 0, 0, 0);
  if (!xs.empty()) {
    double x0 = *std::min_element(xs.begin(), xs.end()), x1 = *std::max_element(xs.begin(), xs.end());
    double y0 = *std::min_element(ys.begin(), ys.end()), y1 = *std::max_element(ys.begin(), ys.end());
    if (x1 - x0 < 1e-12) x1 = x0 + 1;
    if (y1 - y0 < 1e-12) y1 = y0 + 1;
    std::map<std::string, int> color_of;
    for (size_t i = 0; i < xs.size(); ++i) {
      if (!color_of.count(keys[i].objective))
        color_of[keys[i].objective] = static_cast<int>(color_of.size()) % 8;
      const float* c = kColors[color_of[keys[i].objective]];
      const int px = m + static_cast<int>((xs[i] - x0) / (x1 - x0) * (420 - 2 * m));
      const int py = (320 - m) - static_cast<int>((ys[i] - y0) / (y1 - y0) * (320 - 2 * m));
      cv.dot(py, px, 3, c[0], c[1], c[2]);
    }
    if (xs.size() >= 3) {
      bool degenerate = true;
      for (size_t i = 1; i < xs.size(); ++i)
        if (xs[i] != xs[0] || ys[i] != ys[0]) degenerate = false;
      if (!degenerate) {
        try {
          const double r = tre::pearson(xs, ys);
          cv.text(12, m, "r=" + fmt(r));
          sidecar << "pearson\t" << r << "\n";
        } catch (const std::exception&) {
          // zero-variance series: no annotation
        }
      }
    }
  }
  cv.save(dir + "/fig_parts_vs_zsl.ppm");
}

void bars(Canvas& cv, const std::vector<double>& values, int base_y, int x0, int width,
          double scale, int color) {
  for (size_t i = 0; i < values.size(); ++i) {
    const int x = x0 + static_cast<int>(i) * (width + 6);
    const int h = static_cast<int>(std::abs(values[i]) * scale);
    const float* c = kColors[color % 8];
    if (values[i] >= 0)
      cv.rect(base_y - h, x, base_y, x + width, c[0], c[1], c[2]);
    else
      cv.rect(base_y, x, base_y + h, x + width, c[0], c[1], c[2]);
  }
}

void relative_improvement_figure(const std::vector<RunRecord>& records, const std::string& dir,
                                 std::ofstream& sidecar) {
  auto zsl = metric_map(records, "zsl_top1");
  sidecar << "# objective\tlocal_loss\trelative_improvement\n";
  std::vector<double> vals;
  std::vector<std::string> labels;
  for (const auto& [k, v] : zsl) {
    if (k.local_loss != "none") continue;
    for (const char* ll : {"ac", "lc"}) {
      Key kk = k;
      kk.local_loss = ll;
      auto it = zsl.find(kk);
      if (it == zsl.end()) {
        sidecar << "missing\t" << k.objective << "\t" << ll << "\n";
        continue;
      }
      if (v <= 0) continue;
      const double rel = (it->second - v) / v;
      vals.push_back(rel);
      labels.push_back(k.objective + "/" + ll);
      sidecar << k.objective << "\t" << ll << "\t" << rel << "\n";
    }
  }
  Canvas cv(320, 60 + static_cast<int>(vals.size()) * 26);
  const int base = 160;
  cv.hline(base, 10, cv.im.w - 10, 0, 0, 0);
  double mx = 0.01;
  for (double v : vals) mx = std::max(mx, std::abs(v));
  bars(cv, vals, base, 20, 20, 130.0 / mx, 1);
  cv.save(dir + "/fig_relative_improvement.ppm");
}

void paired_metric_figure(const std::vector<RunRecord>& records, const std::string& dir,
                          const std::string& metric_a, const std::string& metric_b,
                          const std::string& name, std::ofstream& sidecar) {
  auto ma = metric_map(records, metric_a);
  auto mb = metric_map(records, metric_b);
  sidecar << "# objective\t" << metric_a << "\t" << metric_b << "\n";
  std::vector<double> va, vb;
  for (const auto& [k, v] : ma) {
    auto it = mb.find(k);
    if (it == mb.end()) {
      sidecar << "missing\t" << metric_b << "\t" << k.objective << "\n";
      continue;
    }
    va.push_back(v);
    vb.push_back(it->second);
    sidecar << k.objective << "\t" << v << "\t" << it->second << "\n";
  }
  Canvas cv(320, 60 + static_cast<int>(va.size()) * 52);
  const int base = 280;
  cv.hline(base, 10, cv.im.w - 10, 0, 0, 0);
  double mx = 0.01;
  for (double v : va) mx = std::max(mx, std::abs(v));
  for (double v : vb) mx = std::max(mx, std::abs(v));
  const double scale = 240.0 / mx;
  for (size_t i = 0; i < va.size(); ++i) {
    const int x = 20 + static_cast<int>(i) * 52;
    cv.rect(base - static_cast<int>(va[i] * scale), x, base, x + 18, kColors[1][0], kColors[1][1],
            kColors[1][2]);
    cv.rect(base - static_cast<int>(vb[i] * scale), x + 22, base, x + 40, kColors[3][0],
            kColors[3][1], kColors[3][2]);
  }
  cv.save(dir + "/" + name + ".ppm");
}

}  // namespace

void emit_figures(const std::vector<RunRecord>& records, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream sidecar(out_dir + "/fig_parts_vs_zsl.tsv");
    scatter_parts_vs_zsl(records, out_dir, sidecar);
  }
  {
    std::ofstream sidecar(out_dir + "/fig_relative_improvement.tsv");
    relative_improvement_figure(records, out_dir, sidecar);
  }
  {
    std::ofstream sidecar(out_dir + "/fig_aggregation.tsv");
    paired_metric_figure(records, out_dir, "zsl_top1_avg_repr", "zsl_top1_avg_pred",
                         "fig_aggregation", sidecar);
  }
  {
    std::ofstream sidecar(out_dir + "/fig_pool.tsv");
    paired_metric_figure(records, out_dir, "zsl_top1_pre_pool", "zsl_top1_post_pool", "fig_pool",
                         sidecar);
  }
}

}  // namespace zfs::harness
