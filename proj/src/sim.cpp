#include "latnav/sim.hpp"

namespace latnav {

bool check_collision(const AgentState& agent, const WorldState& world) {
  const Obb2 body = agent.collision_obb();
  for (const Wall& w : world.walls) {
    if (obb_overlap(body, w.box)) return true;
  }
  for (const Obstacle& ob : world.obstacles) {
    if (ob.footprint == FootprintType::kBox) {
      if (obb_overlap(body, ob.obb())) return true;
    } else if (obb_circle_overlap(body, ob.circle())) {
      return true;
    }
  }
  return false;
}

StepOutcome step(const AgentState& agent, const WorldState& world,
                 const Action& action, const Vec2& goal, double elapsed_after,
                 const SimConfig& cfg) {
  const Action a = action.clipped();

  StepOutcome out;
  out.agent = agent;
  const Vec2 displacement = rotate({a.vx, a.vy}, agent.pose.yaw) * cfg.dt;
  out.agent.pose.x += displacement.x;
  out.agent.pose.y += displacement.y;
  out.agent.pose.yaw = wrap_angle(agent.pose.yaw + a.wz * cfg.dt);
  out.agent.traveled_distance += displacement.norm();

  out.world = step_obstacles(world, cfg.dt);

  const double backward = std::min(a.vx, 0.0);
  out.reward.velocity_penalty =
      (cfg.rewards.alpha_lat * a.vy * a.vy + cfg.rewards.alpha_back * backward * backward) *
      cfg.dt;

  if (check_collision(out.agent, out.world)) {
    out.termination = Termination::kCollision;
    out.reward.terminal_bonus = cfg.rewards.r_obst;
  } else if ((out.agent.pose.position() - goal).norm() <= cfg.goal_radius) {
    out.termination = Termination::kGoal;
    out.reward.terminal_bonus = cfg.rewards.r_goal;
  } else if (elapsed_after >= cfg.timeout) {
    out.termination = Termination::kTimeout;
    out.reward.terminal_bonus = cfg.rewards.r_timeout;
  }
  if (out.termination != Termination::kNone) {
    out.reward.distance_penalty = cfg.rewards.alpha_dist * out.agent.traveled_distance;
  }
  return out;
}

CameraMount randomize_camera(const CameraRandomization& cfg, Rng& rng) {
  CameraMount mount;
  mount.offset = {cfg.nominal_offset.x + rng.uniform(-cfg.offset_range, cfg.offset_range),
                  cfg.nominal_offset.y + rng.uniform(-cfg.offset_range, cfg.offset_range),
                  cfg.nominal_offset.z + rng.uniform(-cfg.offset_range, cfg.offset_range)};
  mount.pitch = cfg.nominal_pitch + rng.uniform(-cfg.pitch_range, cfg.pitch_range);
  mount.tilt = cfg.nominal_tilt + rng.uniform(-cfg.tilt_range, cfg.tilt_range);
  return mount;
}

Pose2 camera_pose(const AgentState& agent, const CameraMount& mount) {
  return compose(agent.pose, {mount.offset.x, mount.offset.y, mount.tilt});
}

Environment::Result Environment::step(const Action& action) {
  elapsed_ += cfg_.dt;
  StepOutcome out = latnav::step(agent_, world_, action, goal_, elapsed_, cfg_);
  agent_ = out.agent;
  world_ = std::move(out.world);
  termination_ = out.termination;
  return {out.reward, out.termination};
}

}  // namespace latnav
