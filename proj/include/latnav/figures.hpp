#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latnav/camera.hpp"

namespace latnav {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;  // row-major RGB triples

  RgbImage() = default;
  RgbImage(int w, int h, uint8_t fill = 255)
      : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

  uint8_t* px(int row, int col) {
    return data.data() + (static_cast<size_t>(row) * width + col) * 3;
  }
  const uint8_t* px(int row, int col) const {
    return data.data() + (static_cast<size_t>(row) * width + col) * 3;
  }
  void set(int row, int col, uint8_t r, uint8_t g, uint8_t b);
};

void write_ppm(const std::filesystem::path& path, const RgbImage& img);
void write_pgm(const std::filesystem::path& path, const std::vector<uint8_t>& gray,
               int width, int height);

// Near = bright, far = dark, invalid = dark red.
RgbImage depth_to_rgb(const DepthImage& img, double max_range);

// Upscales by an integer factor with nearest-neighbor sampling.
RgbImage upscale(const RgbImage& img, int factor);

RgbImage hstack(const std::vector<RgbImage>& imgs, int gap = 2);
RgbImage vstack(const std::vector<RgbImage>& imgs, int gap = 2);

struct CurveSeries {
  std::string label;
  std::vector<double> values;  // y per step
};

// Polyline chart of the series over their index, axes at the left/bottom.
// Numeric labels go to the sidecar CSV, not the raster.
RgbImage render_curves(const std::vector<CurveSeries>& series, int width, int height);

void write_curves_csv(const std::filesystem::path& path,
                      const std::vector<CurveSeries>& series);

}  // namespace latnav
