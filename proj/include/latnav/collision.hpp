#pragma once

#include <array>

#include "latnav/geometry.hpp"

namespace latnav {

// Oriented box in the plane: center, half extents along its local axes, yaw.
struct Obb2 {
  Vec2 center;
  Vec2 half;
  double yaw = 0.0;

  Obb2 inflated(double margin) const {
    return {center, {half.x + margin, half.y + margin}, yaw};
  }
  std::array<Vec2, 4> corners() const;
  bool operator==(const Obb2&) const = default;
};

struct Circle2 {
  Vec2 center;
  double radius = 0.0;

  Circle2 inflated(double margin) const { return {center, radius + margin}; }
  bool operator==(const Circle2&) const = default;
};

// Separating-axis test over the four face normals of the two boxes.
bool obb_overlap(const Obb2& a, const Obb2& b);

// Closest point on the box to the circle center vs radius.
bool obb_circle_overlap(const Obb2& box, const Circle2& c);

bool point_in_obb(const Vec2& p, const Obb2& box);
bool point_in_circle(const Vec2& p, const Circle2& c);

}  // namespace latnav
