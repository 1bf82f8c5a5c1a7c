#pragma once

#include <algorithm>
#include <cmath>

namespace latnav {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::sqrt(x * x + y * y); }
  double squared_norm() const { return x * x + y * y; }
  Vec2 perp() const { return {-y, x}; }
  bool operator==(const Vec2&) const = default;
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool operator==(const Vec3&) const = default;
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Planar pose (x, y, yaw). Yaw measured CCW from +x.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Vec2 position() const { return {x, y}; }
  bool operator==(const Pose2&) const = default;
};

inline Vec2 rotate(const Vec2& v, double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Body-frame vector from a world-frame one.
inline Vec2 rotate_inverse(const Vec2& v, double yaw) { return rotate(v, -yaw); }

inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

inline double deg_to_rad(double deg) { return deg * M_PI / 180.0; }

// Pose of `rel` expressed in `base`'s frame, composed into the world frame.
inline Pose2 compose(const Pose2& base, const Pose2& rel) {
  const Vec2 p = rotate({rel.x, rel.y}, base.yaw);
  return {base.x + p.x, base.y + p.y, base.yaw + rel.yaw};
}

// Relative planar motion from `a` to `b`, expressed in `a`'s frame.
inline Pose2 relative_pose(const Pose2& a, const Pose2& b) {
  const Vec2 d = rotate_inverse({b.x - a.x, b.y - a.y}, a.yaw);
  return {d.x, d.y, wrap_angle(b.yaw - a.yaw)};
}

struct Aabb2 {
  Vec2 min;
  Vec2 max;

  bool contains(const Vec2& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
  }
  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  double area() const { return width() * height(); }
  bool operator==(const Aabb2&) const = default;
};

}  // namespace latnav
