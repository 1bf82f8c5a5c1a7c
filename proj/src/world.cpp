#include "latnav/world.hpp"

#include <cstring>
#include <optional>

#include "latnav/errors.hpp"

namespace latnav {

namespace {

constexpr double kWallThickness = 0.1;
constexpr int kPlacementAttempts = 200;
constexpr int kStartGoalAttempts = 1000;

struct SizeRange {
  double lo;
  double hi;
};

// Archetype footprint and height ranges.
struct CategoryDims {
  FootprintType footprint;
  SizeRange half_x;
  SizeRange half_y;   // ignored for circles
  SizeRange height;
};

CategoryDims dims_for(ObstacleCategory c) {
  switch (c) {
    case ObstacleCategory::kBox:
      return {FootprintType::kBox, {0.15, 0.40}, {0.15, 0.40}, {0.5, 1.8}};
    case ObstacleCategory::kCylinder:
      return {FootprintType::kCircle, {0.10, 0.35}, {0.0, 0.0}, {0.5, 1.8}};
    case ObstacleCategory::kPanel:
      return {FootprintType::kBox, {0.03, 0.08}, {0.30, 0.80}, {1.2, 2.2}};
    case ObstacleCategory::kSlab:
      return {FootprintType::kBox, {0.25, 0.60}, {0.20, 0.50}, {0.15, 0.40}};
  }
  return {FootprintType::kBox, {0.2, 0.3}, {0.2, 0.3}, {0.5, 1.0}};
}

Wall make_wall(Vec2 center, Vec2 half, double height) {
  return Wall{Obb2{center, half, 0.0}, height};
}

bool wall_intersects_walls(const Obb2& box, const std::vector<Wall>& walls,
                           double margin) {
  for (const Wall& w : walls) {
    if (obb_overlap(box.inflated(margin), w.box)) return true;
  }
  return false;
}

// Interior features: either a doorway wall (full span with a gap of width w)
// or a corridor pair (two parallel segments separated by w).
void add_interior_walls(const WorldConfig& cfg, const Aabb2& bounds, Rng& rng,
                        std::vector<Wall>& walls) {
  const int n_segments = cfg.max_interior_walls > 0
                             ? rng.uniform_int(0, cfg.max_interior_walls)
                             : 0;
  int remaining = n_segments;
  int guard = 0;
  while (remaining > 0 && guard++ < 50) {
    const bool vertical = rng.bernoulli(0.5);
    const double height = rng.uniform(cfg.wall_height_min, cfg.wall_height_max);
    const double width = rng.uniform(cfg.narrowness_min, cfg.narrowness_max);
    const double t = kWallThickness;

    // Axis u runs along the wall, v across it.
    const double u_lo = vertical ? bounds.min.y : bounds.min.x;
    const double u_hi = vertical ? bounds.max.y : bounds.max.x;
    const double v_lo = vertical ? bounds.min.x : bounds.min.y;
    const double v_hi = vertical ? bounds.max.x : bounds.max.y;

    auto make_box = [&](double u_center, double u_half, double v_center) {
      const Vec2 c = vertical ? Vec2{v_center, u_center} : Vec2{u_center, v_center};
      const Vec2 h = vertical ? Vec2{t / 2.0, u_half} : Vec2{u_half, t / 2.0};
      return Obb2{c, h, 0.0};
    };

    const bool corridor_pair = remaining >= 2 && rng.bernoulli(0.5);
    if (corridor_pair) {
      const double len = rng.uniform(1.5, 3.0);
      const double u_c = rng.uniform(u_lo + len / 2.0, u_hi - len / 2.0);
      const double v_c =
          rng.uniform(v_lo + cfg.narrowness_min + t, v_hi - width - cfg.narrowness_min - t);
      const Obb2 a = make_box(u_c, len / 2.0, v_c);
      const Obb2 b = make_box(u_c, len / 2.0, v_c + width + t);
      if (!wall_intersects_walls(a, walls, cfg.min_clearance_width) &&
          !wall_intersects_walls(b, walls, cfg.min_clearance_width)) {
        walls.push_back(Wall{a, height});
        walls.push_back(Wall{b, height});
        remaining -= 2;
      }
    } else {
      // Spanning wall with a doorway gap of width `width`.
      const double gap_c = rng.uniform(u_lo + width / 2.0, u_hi - width / 2.0);
      const double v_c = rng.uniform(v_lo + cfg.narrowness_min + t,
                                     v_hi - cfg.narrowness_min - t);
      const double left_hi = gap_c - width / 2.0;
      const double right_lo = gap_c + width / 2.0;
      std::vector<Obb2> parts;
      if (left_hi - u_lo > t) {
        parts.push_back(make_box((u_lo + left_hi) / 2.0, (left_hi - u_lo) / 2.0, v_c));
      }
      if (u_hi - right_lo > t) {
        parts.push_back(make_box((right_lo + u_hi) / 2.0, (u_hi - right_lo) / 2.0, v_c));
      }
      bool ok = !parts.empty();
      for (const Obb2& p : parts) {
        ok = ok && !wall_intersects_walls(p, walls, cfg.min_clearance_width);
      }
      if (ok) {
        for (const Obb2& p : parts) walls.push_back(Wall{p, height});
        remaining -= 1;
      }
    }
  }
}

}  // namespace

void WorldConfig::validate() const {
  if (arena_extent.x <= 0.0 || arena_extent.y <= 0.0) {
    throw ConfigError("world: arena_extent must be positive");
  }
  if (object_density < 0.0) {
    throw ConfigError("world: object_density must be >= 0");
  }
  if (object_speed_max < 0.0) {
    throw ConfigError("world: object_speed_max must be >= 0");
  }
  if (dynamic_fraction < 0.0 || dynamic_fraction > 1.0) {
    throw ConfigError("world: dynamic_fraction must be in [0,1]");
  }
  if (narrowness_min > narrowness_max) {
    throw ConfigError("world: narrowness range inverted");
  }
  if (narrowness_min < min_clearance_width) {
    throw ConfigError(
        "world: narrowness_min below the minimum traversable width; the agent "
        "cannot fit through generated corridors");
  }
  if (object_categories.empty()) {
    throw ConfigError("world: object_categories must not be empty");
  }
}

bool obstacle_intersects_wall(const Obstacle& ob, const Wall& wall) {
  if (ob.footprint == FootprintType::kBox) {
    return obb_overlap(ob.obb(), wall.box);
  }
  return obb_circle_overlap(wall.box, ob.circle());
}

WorldState generate_world(const WorldConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x776f726c64ULL));

  WorldState world;
  const Vec2 half = {cfg.arena_extent.x / 2.0, cfg.arena_extent.y / 2.0};
  world.bounds = {{-half.x, -half.y}, {half.x, half.y}};

  // Perimeter walls sit just outside the bounds so the full arena is free.
  const double t = kWallThickness;
  const double hx = half.x, hy = half.y;
  world.walls.push_back(make_wall({0.0, hy + t / 2.0}, {hx + t, t / 2.0},
                                  rng.uniform(cfg.wall_height_min, cfg.wall_height_max)));
  world.walls.push_back(make_wall({0.0, -hy - t / 2.0}, {hx + t, t / 2.0},
                                  rng.uniform(cfg.wall_height_min, cfg.wall_height_max)));
  world.walls.push_back(make_wall({hx + t / 2.0, 0.0}, {t / 2.0, hy + t},
                                  rng.uniform(cfg.wall_height_min, cfg.wall_height_max)));
  world.walls.push_back(make_wall({-hx - t / 2.0, 0.0}, {t / 2.0, hy + t},
                                  rng.uniform(cfg.wall_height_min, cfg.wall_height_max)));
  const size_t n_perimeter = world.walls.size();

  add_interior_walls(cfg, world.bounds, rng, world.walls);

  double interior_wall_area = 0.0;
  for (size_t i = n_perimeter; i < world.walls.size(); ++i) {
    const Vec2 wh = world.walls[i].box.half;
    interior_wall_area += 4.0 * wh.x * wh.y;
  }
  const double free_area = std::max(0.0, world.bounds.area() - interior_wall_area);

  const int n_obstacles = rng.poisson(cfg.object_density * free_area);
  for (int i = 0; i < n_obstacles; ++i) {
    const int cat_idx = rng.uniform_int(0, static_cast<int>(cfg.object_categories.size()) - 1);
    const ObstacleCategory cat = cfg.object_categories[cat_idx];
    const CategoryDims d = dims_for(cat);

    Obstacle ob;
    ob.category = cat;
    ob.footprint = d.footprint;
    ob.height = rng.uniform(d.height.lo, d.height.hi);
    if (d.footprint == FootprintType::kBox) {
      ob.half_extents = {rng.uniform(d.half_x.lo, d.half_x.hi),
                         rng.uniform(d.half_y.lo, d.half_y.hi)};
    } else {
      ob.radius = rng.uniform(d.half_x.lo, d.half_x.hi);
    }

    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      ob.pose = {rng.uniform(world.bounds.min.x, world.bounds.max.x),
                 rng.uniform(world.bounds.min.y, world.bounds.max.y),
                 rng.uniform(-M_PI, M_PI)};
      placed = true;
      for (const Wall& w : world.walls) {
        if (obstacle_intersects_wall(ob, w)) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) continue;  // over-cluttered pocket; drop this obstacle

    if (cfg.dynamic_fraction > 0.0 && rng.bernoulli(cfg.dynamic_fraction)) {
      ob.velocity = rng.uniform_disk(cfg.object_speed_max);
    }
    world.obstacles.push_back(ob);
  }
  return world;
}

namespace {

Aabb2 footprint_aabb(const Obstacle& ob) {
  if (ob.footprint == FootprintType::kCircle) {
    const Vec2 c = ob.pose.position();
    return {{c.x - ob.radius, c.y - ob.radius}, {c.x + ob.radius, c.y + ob.radius}};
  }
  const auto corners = ob.obb().corners();
  Aabb2 box = {corners[0], corners[0]};
  for (const Vec2& p : corners) {
    box.min.x = std::min(box.min.x, p.x);
    box.min.y = std::min(box.min.y, p.y);
    box.max.x = std::max(box.max.x, p.x);
    box.max.y = std::max(box.max.y, p.y);
  }
  return box;
}

// Push the obstacle out along one axis and flip the approaching velocity
// component. Returns true if a contact was resolved.
bool bounce_off_bounds(Obstacle& ob, const Aabb2& bounds) {
  const Aabb2 fp = footprint_aabb(ob);
  bool hit = false;
  if (fp.min.x < bounds.min.x) {
    ob.pose.x += bounds.min.x - fp.min.x;
    if (ob.velocity.x < 0.0) ob.velocity.x = -ob.velocity.x;
    hit = true;
  } else if (fp.max.x > bounds.max.x) {
    ob.pose.x -= fp.max.x - bounds.max.x;
    if (ob.velocity.x > 0.0) ob.velocity.x = -ob.velocity.x;
    hit = true;
  }
  if (fp.min.y < bounds.min.y) {
    ob.pose.y += bounds.min.y - fp.min.y;
    if (ob.velocity.y < 0.0) ob.velocity.y = -ob.velocity.y;
    hit = true;
  } else if (fp.max.y > bounds.max.y) {
    ob.pose.y -= fp.max.y - bounds.max.y;
    if (ob.velocity.y > 0.0) ob.velocity.y = -ob.velocity.y;
    hit = true;
  }
  return hit;
}

bool bounce_off_wall(Obstacle& ob, const Wall& wall) {
  const bool overlap = obstacle_intersects_wall(ob, wall);
  if (!overlap) return false;

  // Push past touching contact so the post-step state is strictly free.
  constexpr double kSlop = 1e-9;
  // Walls are axis-aligned; the contact normal is the wall's short axis.
  const bool normal_is_x = wall.box.half.x < wall.box.half.y;
  const Aabb2 fp = footprint_aabb(ob);
  const Aabb2 wb = {{wall.box.center.x - wall.box.half.x, wall.box.center.y - wall.box.half.y},
                    {wall.box.center.x + wall.box.half.x, wall.box.center.y + wall.box.half.y}};
  if (normal_is_x) {
    const bool from_left = ob.pose.x < wall.box.center.x;
    if (from_left) {
      ob.pose.x -= fp.max.x - wb.min.x + kSlop;
      if (ob.velocity.x > 0.0) ob.velocity.x = -ob.velocity.x;
    } else {
      ob.pose.x += wb.max.x - fp.min.x + kSlop;
      if (ob.velocity.x < 0.0) ob.velocity.x = -ob.velocity.x;
    }
  } else {
    const bool from_below = ob.pose.y < wall.box.center.y;
    if (from_below) {
      ob.pose.y -= fp.max.y - wb.min.y + kSlop;
      if (ob.velocity.y > 0.0) ob.velocity.y = -ob.velocity.y;
    } else {
      ob.pose.y += wb.max.y - fp.min.y + kSlop;
      if (ob.velocity.y < 0.0) ob.velocity.y = -ob.velocity.y;
    }
  }
  return true;
}

}  // namespace

WorldState step_obstacles(const WorldState& world, double dt) {
  WorldState out = world;
  for (Obstacle& ob : out.obstacles) {
    if (!ob.dynamic()) continue;
    ob.pose.x += ob.velocity.x * dt;
    ob.pose.y += ob.velocity.y * dt;
    // Two passes settle the corner case of hitting a wall and a bound in
    // the same step.
    for (int pass = 0; pass < 2; ++pass) {
      bool any = false;
      for (const Wall& w : out.walls) any |= bounce_off_wall(ob, w);
      any |= bounce_off_bounds(ob, out.bounds);
      if (!any) break;
    }
  }
  return out;
}

std::pair<Pose2, Vec2> sample_start_goal(const WorldState& world,
                                         const Vec2& footprint_half,
                                         double clearance, double min_dist,
                                         Rng& rng, double max_dist) {
  const Vec2 spawn_half = {footprint_half.x + clearance, footprint_half.y + clearance};
  auto pose_free = [&](const Pose2& pose) {
    const Obb2 agent{pose.position(), spawn_half, pose.yaw};
    for (const Wall& w : world.walls) {
      if (obb_overlap(agent, w.box)) return false;
    }
    for (const Obstacle& ob : world.obstacles) {
      if (ob.footprint == FootprintType::kBox) {
        if (obb_overlap(agent, ob.obb())) return false;
      } else if (obb_circle_overlap(agent, ob.circle())) {
        return false;
      }
    }
    return true;
  };

  std::optional<Pose2> start;
  for (int i = 0; i < kStartGoalAttempts && !start; ++i) {
    const Pose2 cand = {rng.uniform(world.bounds.min.x, world.bounds.max.x),
                        rng.uniform(world.bounds.min.y, world.bounds.max.y),
                        rng.uniform(-M_PI, M_PI)};
    if (pose_free(cand)) start = cand;
  }
  if (!start) {
    throw SamplingError("sample_start_goal: no collision-free start pose found");
  }

  const double goal_clearance = 0.2;
  // Walls get extra clearance: an agent stopping anywhere inside the goal
  // radius must stay collision-free at any heading, so naive goal approaches
  // cannot graze a wall.
  const double wall_clearance =
      std::hypot(footprint_half.x, footprint_half.y) + 0.35;
  for (int i = 0; i < kStartGoalAttempts; ++i) {
    const Vec2 goal = {rng.uniform(world.bounds.min.x, world.bounds.max.x),
                       rng.uniform(world.bounds.min.y, world.bounds.max.y)};
    const double dist = (goal - start->position()).norm();
    if (dist < min_dist) continue;
    if (max_dist > 0.0 && dist > max_dist) continue;
    bool blocked = false;
    for (const Wall& w : world.walls) {
      if (point_in_obb(goal, w.box.inflated(wall_clearance))) {
        blocked = true;
        break;
      }
    }
    for (const Obstacle& ob : world.obstacles) {
      if (blocked) break;
      if (ob.dynamic()) continue;
      if (ob.footprint == FootprintType::kBox) {
        blocked = point_in_obb(goal, ob.obb().inflated(goal_clearance));
      } else {
        blocked = point_in_circle(goal, ob.circle().inflated(goal_clearance));
      }
    }
    if (!blocked) return {*start, goal};
  }
  throw SamplingError("sample_start_goal: no admissible goal found");
}

namespace {

void put_bytes(std::vector<uint8_t>& out, const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

template <typename T>
void put(std::vector<uint8_t>& out, const T& v) {
  put_bytes(out, &v, sizeof(T));
}

template <typename T>
T take(const std::vector<uint8_t>& in, size_t& off) {
  if (off + sizeof(T) > in.size()) {
    throw std::runtime_error("world record truncated");
  }
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

constexpr uint32_t kWorldMagic = 0x4c4e5753;  // "LNWS"
constexpr uint32_t kWorldVersion = 1;

}  // namespace

// Fields are written one by one; whole-struct writes would serialize
// indeterminate padding bytes and break bit-identical replay records.
std::vector<uint8_t> serialize_world(const WorldState& world) {
  std::vector<uint8_t> out;
  auto put_vec2 = [&](const Vec2& v) {
    put(out, v.x);
    put(out, v.y);
  };
  put(out, kWorldMagic);
  put(out, kWorldVersion);
  put_vec2(world.bounds.min);
  put_vec2(world.bounds.max);
  put(out, static_cast<uint32_t>(world.walls.size()));
  for (const Wall& w : world.walls) {
    put_vec2(w.box.center);
    put_vec2(w.box.half);
    put(out, w.box.yaw);
    put(out, w.height);
  }
  put(out, static_cast<uint32_t>(world.obstacles.size()));
  for (const Obstacle& ob : world.obstacles) {
    put(out, static_cast<uint8_t>(ob.category));
    put(out, static_cast<uint8_t>(ob.footprint));
    put(out, ob.pose.x);
    put(out, ob.pose.y);
    put(out, ob.pose.yaw);
    put_vec2(ob.half_extents);
    put(out, ob.radius);
    put(out, ob.height);
    put_vec2(ob.velocity);
  }
  return out;
}

WorldState deserialize_world(const std::vector<uint8_t>& bytes) {
  size_t off = 0;
  auto take_vec2 = [&] {
    Vec2 v;
    v.x = take<double>(bytes, off);
    v.y = take<double>(bytes, off);
    return v;
  };
  if (take<uint32_t>(bytes, off) != kWorldMagic) {
    throw std::runtime_error("world record: bad magic");
  }
  if (take<uint32_t>(bytes, off) != kWorldVersion) {
    throw std::runtime_error("world record: unsupported version");
  }
  WorldState world;
  world.bounds.min = take_vec2();
  world.bounds.max = take_vec2();
  const uint32_t n_walls = take<uint32_t>(bytes, off);
  world.walls.reserve(n_walls);
  for (uint32_t i = 0; i < n_walls; ++i) {
    Wall w;
    w.box.center = take_vec2();
    w.box.half = take_vec2();
    w.box.yaw = take<double>(bytes, off);
    w.height = take<double>(bytes, off);
    world.walls.push_back(w);
  }
  const uint32_t n_obs = take<uint32_t>(bytes, off);
  world.obstacles.reserve(n_obs);
  for (uint32_t i = 0; i < n_obs; ++i) {
    Obstacle ob;
    ob.category = static_cast<ObstacleCategory>(take<uint8_t>(bytes, off));
    ob.footprint = static_cast<FootprintType>(take<uint8_t>(bytes, off));
    ob.pose.x = take<double>(bytes, off);
    ob.pose.y = take<double>(bytes, off);
    ob.pose.yaw = take<double>(bytes, off);
    ob.half_extents = take_vec2();
    ob.radius = take<double>(bytes, off);
    ob.height = take<double>(bytes, off);
    ob.velocity = take_vec2();
    world.obstacles.push_back(ob);
  }
  return world;
}

}  // namespace latnav
