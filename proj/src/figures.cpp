#include "latnav/figures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "latnav/artifacts.hpp"

namespace latnav {

void RgbImage::set(int row, int col, uint8_t r, uint8_t g, uint8_t b) {
  if (row < 0 || row >= height || col < 0 || col >= width) return;
  uint8_t* p = px(row, col);
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  std::ostringstream out;
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  atomic_write(path, out.str());
}

void write_pgm(const std::filesystem::path& path, const std::vector<uint8_t>& gray,
               int width, int height) {
  std::ostringstream out;
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()),
            static_cast<std::streamsize>(gray.size()));
  atomic_write(path, out.str());
}

RgbImage depth_to_rgb(const DepthImage& img, double max_range) {
  RgbImage out(img.width, img.height);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const float d = img.at(r, c);
      if (d <= 0.0f) {
        out.set(r, c, 96, 0, 0);
        continue;
      }
      const double x = std::clamp(1.0 - double(d) / max_range, 0.0, 1.0);
      const auto g = static_cast<uint8_t>(std::lround(32.0 + 223.0 * x));
      out.set(r, c, g, g, g);
    }
  }
  return out;
}

RgbImage upscale(const RgbImage& img, int factor) {
  if (factor <= 1) return img;
  RgbImage out(img.width * factor, img.height * factor);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      const uint8_t* p = img.px(r / factor, c / factor);
      out.set(r, c, p[0], p[1], p[2]);
    }
  }
  return out;
}

RgbImage hstack(const std::vector<RgbImage>& imgs, int gap) {
  int width = 0;
  int height = 0;
  for (const RgbImage& img : imgs) {
    width += img.width;
    height = std::max(height, img.height);
  }
  width += gap * std::max<int>(0, static_cast<int>(imgs.size()) - 1);
  RgbImage out(width, height, 255);
  int x = 0;
  for (const RgbImage& img : imgs) {
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < img.width; ++c) {
        const uint8_t* p = img.px(r, c);
        out.set(r, x + c, p[0], p[1], p[2]);
      }
    }
    x += img.width + gap;
  }
  return out;
}

RgbImage vstack(const std::vector<RgbImage>& imgs, int gap) {
  int width = 0;
  int height = 0;
  for (const RgbImage& img : imgs) {
    height += img.height;
    width = std::max(width, img.width);
  }
  height += gap * std::max<int>(0, static_cast<int>(imgs.size()) - 1);
  RgbImage out(width, height, 255);
  int y = 0;
  for (const RgbImage& img : imgs) {
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < img.width; ++c) {
        const uint8_t* p = img.px(r, c);
        out.set(y + r, c, p[0], p[1], p[2]);
      }
    }
    y += img.height + gap;
  }
  return out;
}

namespace {

struct Rgb {
  uint8_t r, g, b;
};

constexpr Rgb kPalette[] = {
    {31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
    {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127},
};

void draw_line(RgbImage& img, int r0, int c0, int r1, int c1, const Rgb& color) {
  const int dr = std::abs(r1 - r0);
  const int dc = std::abs(c1 - c0);
  const int sr = r0 < r1 ? 1 : -1;
  const int sc = c0 < c1 ? 1 : -1;
  int err = (dc > dr ? dc : -dr) / 2;
  while (true) {
    img.set(r0, c0, color.r, color.g, color.b);
    if (r0 == r1 && c0 == c1) break;
    const int e = err;
    if (e > -dc) {
      err -= dr;
      c0 += sc;
    }
    if (e < dr) {
      err += dc;
      r0 += sr;
    }
  }
}

}  // namespace

RgbImage render_curves(const std::vector<CurveSeries>& series, int width, int height) {
  RgbImage out(width, height, 255);
  const int margin = 24;
  const int x0 = margin, x1 = width - 8;
  const int y0 = height - margin, y1 = 8;  // y grows downward

  double lo = 0.0, hi = 1.0;
  bool seen = false;
  size_t longest = 0;
  for (const CurveSeries& s : series) {
    longest = std::max(longest, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      if (!seen) {
        lo = hi = v;
        seen = true;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!seen || hi - lo < 1e-12) hi = lo + 1.0;

  const Rgb axis{0, 0, 0};
  draw_line(out, y0, x0, y0, x1, axis);
  draw_line(out, y0, x0, y1, x0, axis);

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& vals = series[si].values;
    if (vals.size() < 2) continue;
    const Rgb color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    int pr = 0, pc = 0;
    for (size_t i = 0; i < vals.size(); ++i) {
      const double fx = longest > 1 ? double(i) / double(longest - 1) : 0.0;
      const double fy = (vals[i] - lo) / (hi - lo);
      const int c = x0 + static_cast<int>(std::lround(fx * (x1 - x0)));
      const int r = y0 - static_cast<int>(std::lround(fy * (y0 - y1)));
      if (i > 0) draw_line(out, pr, pc, r, c, color);
      pr = r;
      pc = c;
    }
    // Legend swatch: one small block per series in the top margin.
    for (int dr = 0; dr < 4; ++dr) {
      for (int dc = 0; dc < 12; ++dc) {
        out.set(2 + dr, x0 + static_cast<int>(si) * 16 + dc, color.r, color.g, color.b);
      }
    }
  }
  return out;
}

void write_curves_csv(const std::filesystem::path& path,
                      const std::vector<CurveSeries>& series) {
  std::ostringstream out;
  out << "step";
  size_t longest = 0;
  for (const CurveSeries& s : series) {
    out << "," << s.label;
    longest = std::max(longest, s.values.size());
  }
  out << "\n";
  for (size_t i = 0; i < longest; ++i) {
    out << i;
    for (const CurveSeries& s : series) {
      out << ",";
      if (i < s.values.size()) out << s.values[i];
    }
    out << "\n";
  }
  atomic_write(path, out.str());
}

}  // namespace latnav
