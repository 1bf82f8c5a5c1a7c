#pragma once

#include <cstdint>
#include <vector>

#include "latnav/geometry.hpp"
#include "latnav/rng.hpp"
#include "latnav/sim.hpp"
#include "latnav/world.hpp"

namespace latnav {

struct CameraIntrinsics {
  int width = 64;
  int height = 32;
  double hfov_deg = 87.0;
  double vfov_deg = 58.0;
  double min_range = 0.2;   // meters
  double max_range = 4.0;   // meters

  void validate() const;  // throws ConfigError
};

// Row-major grid of range values in meters; 0 encodes invalid.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), values(static_cast<size_t>(w) * h, 0.0f) {}

  float& at(int row, int col) { return values[static_cast<size_t>(row) * width + col]; }
  float at(int row, int col) const { return values[static_cast<size_t>(row) * width + col]; }
  size_t size() const { return values.size(); }
  bool operator==(const DepthImage&) const = default;
};

// Ray-cast range image of ground plane, walls and obstacle solids from the
// agent-mounted camera. No hit renders at max_range; hits clamp into
// [min_range, max_range]. Deterministic.
DepthImage render_depth(const WorldState& world, const AgentState& agent,
                        const CameraMount& mount, const CameraIntrinsics& intr);

// Same render from an explicit planar camera pose (used when spawning free
// cameras for dataset collection).
DepthImage render_depth_from(const WorldState& world, const Pose2& base_pose,
                             const CameraMount& mount, const CameraIntrinsics& intr);

// Synthetic stand-in for real sensor artifacts: range-dependent
// multiplicative noise, invalidation at depth discontinuities, dropout
// speckles. Never revalidates an invalid pixel.
struct DegradeConfig {
  double noise_scale = 0.04;      // sigma(d) = noise_scale * d^2 / max_range
  double edge_threshold = 0.5;    // meters of neighbor depth jump; <=0 disables
  double dropout_rate = 0.02;     // per-pixel invalidation probability
};

DepthImage degrade(const DepthImage& img, const DegradeConfig& cfg,
                   const CameraIntrinsics& intr, Rng& rng);

double coverage(const DepthImage& img);

// Dataset representation: millimeters in 16 bits, 0 = invalid.
std::vector<uint16_t> depth_to_millimeters(const DepthImage& img);
DepthImage depth_from_millimeters(const std::vector<uint16_t>& mm, int width, int height);

}  // namespace latnav
