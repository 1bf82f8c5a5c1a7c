#include "latnav/camera.hpp"

#include <cmath>
#include <limits>

#include "latnav/errors.hpp"

namespace latnav {

void CameraIntrinsics::validate() const {
  if (width < 8 || height < 8) {
    throw ConfigError("camera: resolution must be at least 8x8");
  }
  if (!(0.0 < min_range && min_range < max_range)) {
    throw ConfigError("camera: need 0 < min_range < max_range");
  }
  if (hfov_deg <= 0.0 || hfov_deg >= 180.0 || vfov_deg <= 0.0 || vfov_deg >= 180.0) {
    throw ConfigError("camera: field of view must be in (0, 180) degrees");
  }
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit length
};

// Entry distance of the ray into an upright box: oriented footprint obb
// extruded from z=0 to z=height. +inf if missed.
double ray_box(const Ray& ray, const Obb2& footprint, double height) {
  const Vec2 o2 = rotate_inverse(Vec2{ray.origin.x, ray.origin.y} - footprint.center,
                                 footprint.yaw);
  const Vec2 d2 = rotate_inverse({ray.dir.x, ray.dir.y}, footprint.yaw);
  const double o[3] = {o2.x, o2.y, ray.origin.z};
  const double d[3] = {d2.x, d2.y, ray.dir.z};
  const double lo[3] = {-footprint.half.x, -footprint.half.y, 0.0};
  const double hi[3] = {footprint.half.x, footprint.half.y, height};

  double tmin = 0.0;
  double tmax = kInf;
  for (int i = 0; i < 3; ++i) {
    if (d[i] == 0.0) {
      if (o[i] < lo[i] || o[i] > hi[i]) return kInf;
      continue;
    }
    double t0 = (lo[i] - o[i]) / d[i];
    double t1 = (hi[i] - o[i]) / d[i];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return kInf;
  }
  return tmin;
}

double ray_cylinder(const Ray& ray, const Vec2& center, double radius, double height) {
  // Radial interval from the 2D quadratic, z interval from the slab.
  const double ox = ray.origin.x - center.x;
  const double oy = ray.origin.y - center.y;
  const double dx = ray.dir.x;
  const double dy = ray.dir.y;

  double rad_lo, rad_hi;
  const double a = dx * dx + dy * dy;
  if (a < 1e-12) {
    if (ox * ox + oy * oy > radius * radius) return kInf;
    rad_lo = 0.0;
    rad_hi = kInf;
  } else {
    const double b = ox * dx + oy * dy;
    const double c = ox * ox + oy * oy - radius * radius;
    const double disc = b * b - a * c;
    if (disc < 0.0) return kInf;
    const double sq = std::sqrt(disc);
    rad_lo = (-b - sq) / a;
    rad_hi = (-b + sq) / a;
  }

  double z_lo, z_hi;
  if (ray.dir.z == 0.0) {
    if (ray.origin.z < 0.0 || ray.origin.z > height) return kInf;
    z_lo = 0.0;
    z_hi = kInf;
  } else {
    z_lo = (0.0 - ray.origin.z) / ray.dir.z;
    z_hi = (height - ray.origin.z) / ray.dir.z;
    if (z_lo > z_hi) std::swap(z_lo, z_hi);
  }

  const double tmin = std::max({rad_lo, z_lo, 0.0});
  const double tmax = std::min(rad_hi, z_hi);
  if (tmin > tmax) return kInf;
  return tmin;
}

double ray_ground(const Ray& ray) {
  if (ray.dir.z >= 0.0) return kInf;
  return -ray.origin.z / ray.dir.z;
}

double nearest_hit(const Ray& ray, const WorldState& world) {
  double t = ray_ground(ray);
  for (const Wall& w : world.walls) {
    t = std::min(t, ray_box(ray, w.box, w.height));
  }
  for (const Obstacle& ob : world.obstacles) {
    if (ob.footprint == FootprintType::kBox) {
      t = std::min(t, ray_box(ray, ob.obb(), ob.height));
    } else {
      t = std::min(t, ray_cylinder(ray, ob.pose.position(), ob.radius, ob.height));
    }
  }
  return t;
}

}  // namespace

DepthImage render_depth_from(const WorldState& world, const Pose2& base_pose,
                             const CameraMount& mount, const CameraIntrinsics& intr) {
  const Pose2 cam_planar = compose(base_pose, {mount.offset.x, mount.offset.y, mount.tilt});
  const Vec3 origin = {cam_planar.x, cam_planar.y, mount.offset.z};
  const double yaw = cam_planar.yaw;
  const double pitch = mount.pitch;
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double tan_h = std::tan(deg_to_rad(intr.hfov_deg) / 2.0);
  const double tan_v = std::tan(deg_to_rad(intr.vfov_deg) / 2.0);

  DepthImage img(intr.width, intr.height);
  for (int r = 0; r < intr.height; ++r) {
    const double v = (2.0 * (r + 0.5) / intr.height - 1.0);
    for (int c = 0; c < intr.width; ++c) {
      const double u = (2.0 * (c + 0.5) / intr.width - 1.0);
      // Camera frame: +x optical axis, +y left, +z up. Image row 0 looks up.
      Vec3 d = {1.0, -u * tan_h, -v * tan_v};
      const double inv_norm = 1.0 / d.norm();
      d = d * inv_norm;
      // Pitch about camera y (positive looks down), then yaw about z.
      const Vec3 dp = {cp * d.x + sp * d.z, d.y, -sp * d.x + cp * d.z};
      const Vec3 dw = {cy * dp.x - sy * dp.y, sy * dp.x + cy * dp.y, dp.z};

      const double t = nearest_hit({origin, dw}, world);
      const double range = std::isinf(t) ? intr.max_range
                                         : std::clamp(t, intr.min_range, intr.max_range);
      img.at(r, c) = static_cast<float>(range);
    }
  }
  return img;
}

DepthImage render_depth(const WorldState& world, const AgentState& agent,
                        const CameraMount& mount, const CameraIntrinsics& intr) {
  return render_depth_from(world, agent.pose, mount, intr);
}

DepthImage degrade(const DepthImage& img, const DegradeConfig& cfg,
                   const CameraIntrinsics& intr, Rng& rng) {
  DepthImage out = img;

  // Discontinuity mask from the input image, before noise perturbs it.
  std::vector<uint8_t> edge(img.size(), 0);
  if (cfg.edge_threshold > 0.0) {
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < img.width; ++c) {
        const float d = img.at(r, c);
        if (d == 0.0f) continue;
        double jump = 0.0;
        if (c + 1 < img.width && img.at(r, c + 1) != 0.0f) {
          jump = std::max(jump, std::abs(double(img.at(r, c + 1)) - d));
        }
        if (r + 1 < img.height && img.at(r + 1, c) != 0.0f) {
          jump = std::max(jump, std::abs(double(img.at(r + 1, c)) - d));
        }
        if (c > 0 && img.at(r, c - 1) != 0.0f) {
          jump = std::max(jump, std::abs(double(img.at(r, c - 1)) - d));
        }
        if (r > 0 && img.at(r - 1, c) != 0.0f) {
          jump = std::max(jump, std::abs(double(img.at(r - 1, c)) - d));
        }
        if (jump > cfg.edge_threshold) edge[static_cast<size_t>(r) * img.width + c] = 1;
      }
    }
  }

  for (size_t i = 0; i < out.values.size(); ++i) {
    float& d = out.values[i];
    if (d == 0.0f) continue;
    if (cfg.noise_scale > 0.0) {
      const double sigma = cfg.noise_scale * double(d) * double(d) / intr.max_range;
      const double noisy = double(d) + rng.normal(0.0, sigma);
      d = static_cast<float>(std::clamp(noisy, intr.min_range, intr.max_range));
    }
    if (edge[i]) {
      d = 0.0f;
      continue;
    }
    if (cfg.dropout_rate > 0.0 && rng.bernoulli(cfg.dropout_rate)) {
      d = 0.0f;
    }
  }
  return out;
}

double coverage(const DepthImage& img) {
  if (img.values.empty()) return 0.0;
  size_t valid = 0;
  for (float v : img.values) {
    if (v != 0.0f) ++valid;
  }
  return static_cast<double>(valid) / static_cast<double>(img.values.size());
}

std::vector<uint16_t> depth_to_millimeters(const DepthImage& img) {
  std::vector<uint16_t> mm(img.values.size());
  for (size_t i = 0; i < img.values.size(); ++i) {
    const double v = std::clamp(double(img.values[i]) * 1000.0, 0.0, 65535.0);
    mm[i] = static_cast<uint16_t>(std::lround(v));
  }
  return mm;
}

DepthImage depth_from_millimeters(const std::vector<uint16_t>& mm, int width, int height) {
  DepthImage img(width, height);
  for (size_t i = 0; i < mm.size() && i < img.values.size(); ++i) {
    img.values[i] = static_cast<float>(mm[i]) / 1000.0f;
  }
  return img;
}

}  // namespace latnav
