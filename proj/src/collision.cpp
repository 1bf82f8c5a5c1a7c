#include "latnav/collision.hpp"

#include <cmath>

namespace latnav {

std::array<Vec2, 4> Obb2::corners() const {
  const Vec2 ax = rotate({1.0, 0.0}, yaw);
  const Vec2 ay = rotate({0.0, 1.0}, yaw);
  const Vec2 ex = ax * half.x;
  const Vec2 ey = ay * half.y;
  return {center + ex + ey, center - ex + ey, center - ex - ey,
          center + ex - ey};
}

namespace {

struct Interval {
  double lo;
  double hi;
};

Interval project(const std::array<Vec2, 4>& pts, const Vec2& axis) {
  double lo = pts[0].dot(axis);
  double hi = lo;
  for (int i = 1; i < 4; ++i) {
    const double v = pts[i].dot(axis);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

bool separated_on(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b,
                  const Vec2& axis) {
  const Interval ia = project(a, axis);
  const Interval ib = project(b, axis);
  return ia.hi < ib.lo || ib.hi < ia.lo;
}

}  // namespace

bool obb_overlap(const Obb2& a, const Obb2& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const Vec2 axes[4] = {rotate({1.0, 0.0}, a.yaw), rotate({0.0, 1.0}, a.yaw),
                        rotate({1.0, 0.0}, b.yaw), rotate({0.0, 1.0}, b.yaw)};
  for (const Vec2& axis : axes) {
    if (separated_on(ca, cb, axis)) return false;
  }
  return true;
}

bool obb_circle_overlap(const Obb2& box, const Circle2& c) {
  // Closest point in the box's frame.
  const Vec2 local = rotate_inverse(c.center - box.center, box.yaw);
  const Vec2 clamped = {std::clamp(local.x, -box.half.x, box.half.x),
                        std::clamp(local.y, -box.half.y, box.half.y)};
  return (local - clamped).squared_norm() <= c.radius * c.radius;
}

bool point_in_obb(const Vec2& p, const Obb2& box) {
  const Vec2 local = rotate_inverse(p - box.center, box.yaw);
  return std::abs(local.x) <= box.half.x && std::abs(local.y) <= box.half.y;
}

bool point_in_circle(const Vec2& p, const Circle2& c) {
  return (p - c.center).squared_norm() <= c.radius * c.radius;
}

}  // namespace latnav
