#include "latnav/depth_filter.hpp"

#include "latnav/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace latnav {

namespace {

void check_kernel(int size, const char* name) {
  if (size < 3 || size % 2 == 0) {
    throw ConfigError(std::string(name) + " must be odd and >= 3");
  }
}

std::vector<std::pair<int, int>> kernel_offsets(KernelShape shape, int size) {
  const int r = size / 2;
  std::vector<std::pair<int, int>> out;
  for (int di = -r; di <= r; ++di) {
    for (int dj = -r; dj <= r; ++dj) {
      if (shape == KernelShape::kDiamond && std::abs(di) + std::abs(dj) > r) continue;
      out.emplace_back(di, dj);
    }
  }
  return out;
}

enum class Reduce { kMin, kMax };

// Reduction over valid pixels in the kernel footprint; pixels with no valid
// neighbor stay invalid, so validity never shrinks.
DepthImage reduce_filter(const DepthImage& img, KernelShape shape, int size, Reduce op) {
  const auto offsets = kernel_offsets(shape, size);
  DepthImage out(img.width, img.height);
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      float best = 0.0f;
      bool found = false;
      for (const auto& [di, dj] : offsets) {
        const int ni = i + di;
        const int nj = j + dj;
        if (ni < 0 || ni >= img.height || nj < 0 || nj >= img.width) continue;
        const float d = img.at(ni, nj);
        if (d <= 0.0f) continue;
        if (!found) {
          best = d;
          found = true;
        } else if (op == Reduce::kMin ? d < best : d > best) {
          best = d;
        }
      }
      out.at(i, j) = found ? best : 0.0f;
    }
  }
  return out;
}

}  // namespace

void FilterConfig::validate() const {
  check_kernel(dilation_size, "dilation_size");
  check_kernel(closing_size, "closing_size");
  check_kernel(large_dilation_size, "large_dilation_size");
  if (large_dilation_reps < 1) throw ConfigError("large_dilation_reps must be >= 1");
  if (bilateral_sigma_space <= 0.0 || bilateral_sigma_depth <= 0.0) {
    throw ConfigError("bilateral sigmas must be positive");
  }
}

DepthImage min_dilate(const DepthImage& img, KernelShape shape, int size) {
  return reduce_filter(img, shape, size, Reduce::kMin);
}

DepthImage close_holes(const DepthImage& img, int size) {
  return reduce_filter(reduce_filter(img, KernelShape::kFull, size, Reduce::kMin),
                       KernelShape::kFull, size, Reduce::kMax);
}

DepthImage filter_stage1(const DepthImage& img, const FilterConfig& cfg) {
  return close_holes(min_dilate(img, cfg.dilation_shape, cfg.dilation_size), cfg.closing_size);
}

DepthImage filter_stage2(const DepthImage& img, const FilterConfig& cfg) {
  const auto offsets = kernel_offsets(KernelShape::kFull, cfg.large_dilation_size);
  DepthImage cur = img;
  for (int rep = 0; rep < cfg.large_dilation_reps; ++rep) {
    int invalid = 0;
    int filled = 0;
    DepthImage next = cur;
    for (int i = 0; i < cur.height; ++i) {
      for (int j = 0; j < cur.width; ++j) {
        if (cur.at(i, j) > 0.0f) continue;
        ++invalid;
        float best = 0.0f;
        bool found = false;
        for (const auto& [di, dj] : offsets) {
          const int ni = i + di;
          const int nj = j + dj;
          if (ni < 0 || ni >= cur.height || nj < 0 || nj >= cur.width) continue;
          const float d = cur.at(ni, nj);
          if (d <= 0.0f) continue;
          if (!found || d < best) {
            best = d;
            found = true;
          }
        }
        if (found) {
          next.at(i, j) = best;
          ++filled;
        }
      }
    }
    cur = std::move(next);
    if (invalid == filled) break;  // none left
    if (filled == 0) break;        // no valid source anywhere
  }
  return cur;
}

DepthImage filter_stage3(const DepthImage& img, const FilterConfig& cfg) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * cfg.bilateral_sigma_space)));
  const double inv_2ss = 1.0 / (2.0 * cfg.bilateral_sigma_space * cfg.bilateral_sigma_space);
  const double inv_2sd = 1.0 / (2.0 * cfg.bilateral_sigma_depth * cfg.bilateral_sigma_depth);
  DepthImage out(img.width, img.height);
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      const double center = img.at(i, j);
      if (center <= 0.0) continue;  // invalid passes through untouched
      // Row-major accumulation in double so results are reproducible
      // bit-for-bit across builds.
      double acc = 0.0;
      double wacc = 0.0;
      for (int di = -radius; di <= radius; ++di) {
        const int ni = i + di;
        if (ni < 0 || ni >= img.height) continue;
        for (int dj = -radius; dj <= radius; ++dj) {
          const int nj = j + dj;
          if (nj < 0 || nj >= img.width) continue;
          const double d = img.at(ni, nj);
          if (d <= 0.0) continue;
          const double diff = d - center;
          const double w = std::exp(-(double(di) * di + double(dj) * dj) * inv_2ss) *
                           std::exp(-diff * diff * inv_2sd);
          acc += w * d;
          wacc += w;
        }
      }
      out.at(i, j) = static_cast<float>(acc / wacc);
    }
  }
  return out;
}

DepthImage filter_target(const DepthImage& img, const FilterConfig& cfg) {
  if (coverage(img) == 0.0) {
    throw std::invalid_argument("filter_target: image has no valid pixel");
  }
  return filter_stage3(filter_stage2(filter_stage1(img, cfg), cfg), cfg);
}

}  // namespace latnav
