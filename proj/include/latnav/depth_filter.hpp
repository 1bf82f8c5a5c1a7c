#pragma once

#include "latnav/camera.hpp"

namespace latnav {

enum class KernelShape : uint8_t { kDiamond = 0, kFull = 1 };

struct FilterConfig {
  KernelShape dilation_shape = KernelShape::kDiamond;
  int dilation_size = 5;       // stage 1 min-dilation
  int closing_size = 5;        // stage 1 hole closing
  int large_dilation_size = 9; // stage 2, fills still-invalid pixels
  int large_dilation_reps = 20;
  double bilateral_sigma_space = 3.0;  // pixels; window radius = ceil(2*sigma)
  double bilateral_sigma_depth = 0.3;  // meters

  void validate() const;  // kernel sizes odd and >= 3
};

// Dilation on depth takes the minimum over valid pixels in the kernel
// footprint, so near surfaces inflate and object bounds grow.
DepthImage min_dilate(const DepthImage& img, KernelShape shape, int size);

// Grayscale closing on depth: min-dilate then max-filter, both over valid
// pixels only.
DepthImage close_holes(const DepthImage& img, int size);

// Stage entry points; filter_target composes them.
DepthImage filter_stage1(const DepthImage& img, const FilterConfig& cfg);
DepthImage filter_stage2(const DepthImage& img, const FilterConfig& cfg);
DepthImage filter_stage3(const DepthImage& img, const FilterConfig& cfg);

// Completed, detail-reduced, object-inflated reconstruction target.
// Throws std::invalid_argument when the input has no valid pixel.
DepthImage filter_target(const DepthImage& img, const FilterConfig& cfg);

}  // namespace latnav
