#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "latnav/collision.hpp"
#include "latnav/geometry.hpp"
#include "latnav/rng.hpp"

namespace latnav {

enum class ObstacleCategory : uint8_t {
  kBox = 0,
  kCylinder = 1,
  kPanel = 2,  // tall thin panel
  kSlab = 3,   // low flat slab
};

struct WorldConfig {
  Vec2 arena_extent = {8.0, 8.0};        // full side lengths in meters
  double narrowness_min = 1.0;           // free-corridor width range
  double narrowness_max = 2.5;
  double wall_height_min = 0.5;
  double wall_height_max = 2.5;
  double object_density = 0.1;           // objects per m^2 of free area
  double object_speed_max = 0.8;         // m/s
  std::vector<ObstacleCategory> object_categories = {
      ObstacleCategory::kBox, ObstacleCategory::kCylinder,
      ObstacleCategory::kPanel, ObstacleCategory::kSlab};
  double dynamic_fraction = 0.0;
  int max_interior_walls = 4;
  // Narrowest passage the generator may create; worlds stay traversable for
  // any agent whose inflated diagonal fits through it.
  double min_clearance_width = 0.9;
  uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct Wall {
  Obb2 box;       // axis-aligned in practice, thickness in the short axis
  double height = 2.0;
  bool operator==(const Wall&) const = default;
};

enum class FootprintType : uint8_t { kBox = 0, kCircle = 1 };

struct Obstacle {
  ObstacleCategory category = ObstacleCategory::kBox;
  FootprintType footprint = FootprintType::kBox;
  Pose2 pose;
  Vec2 half_extents;      // box footprint
  double radius = 0.0;    // circle footprint
  double height = 1.0;
  Vec2 velocity;          // (0,0) for static obstacles

  bool dynamic() const { return velocity.x != 0.0 || velocity.y != 0.0; }
  Obb2 obb() const { return {pose.position(), half_extents, pose.yaw}; }
  Circle2 circle() const { return {pose.position(), radius}; }
  bool operator==(const Obstacle&) const = default;
};

struct WorldState {
  Aabb2 bounds;
  std::vector<Wall> walls;
  std::vector<Obstacle> obstacles;

  bool operator==(const WorldState&) const = default;
};

// Deterministic function of cfg (the seed included). Throws ConfigError for
// unsatisfiable narrowness, SamplingError if clutter cannot be placed.
WorldState generate_world(const WorldConfig& cfg);

// Advances obstacle kinematics by dt with specular bounce at walls and
// arena bounds. Pure; static obstacles unchanged, speeds preserved.
WorldState step_obstacles(const WorldState& world, double dt);

bool obstacle_intersects_wall(const Obstacle& ob, const Wall& wall);

// Collision-free start pose and a goal at least min_dist away, rejected
// against walls and static obstacles. footprint_half is the agent collision
// half-extents including inflation; clearance adds spawn margin on top.
// max_dist of 0 leaves the goal distance uncapped.
std::pair<Pose2, Vec2> sample_start_goal(const WorldState& world,
                                         const Vec2& footprint_half,
                                         double clearance, double min_dist,
                                         Rng& rng, double max_dist = 0.0);

// Versioned binary record for replay.
std::vector<uint8_t> serialize_world(const WorldState& world);
WorldState deserialize_world(const std::vector<uint8_t>& bytes);

}  // namespace latnav
