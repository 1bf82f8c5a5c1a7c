#pragma once

#include <cstdint>

#include "latnav/geometry.hpp"
#include "latnav/rng.hpp"
#include "latnav/world.hpp"

namespace latnav {

struct Action {
  double vx = 0.0;  // body-frame forward, m/s
  double vy = 0.0;  // body-frame lateral, m/s
  double wz = 0.0;  // yaw rate, rad/s

  static constexpr double kLimit = 1.0;
  Action clipped() const {
    return {std::clamp(vx, -kLimit, kLimit), std::clamp(vy, -kLimit, kLimit),
            std::clamp(wz, -kLimit, kLimit)};
  }
};

struct RewardConfig {
  double r_obst = -2.0;
  double r_goal = 2.0;
  double r_timeout = 0.0;
  double alpha_lat = -0.05;
  double alpha_back = -0.005;
  double alpha_dist = -0.05;
};

struct AgentState {
  Pose2 pose;
  Vec2 half_extents = {0.30, 0.20};   // nominal body
  double inflation_margin = 0.05;     // collision cuboid grows by this per side
  double traveled_distance = 0.0;

  Obb2 collision_obb() const {
    return {pose.position(), {half_extents.x + inflation_margin,
                              half_extents.y + inflation_margin}, pose.yaw};
  }
};

enum class Termination : uint8_t { kNone = 0, kGoal = 1, kCollision = 2, kTimeout = 3 };

struct RewardTerms {
  double velocity_penalty = 0.0;  // per-step lateral/backward penalty
  double terminal_bonus = 0.0;    // r_goal / r_obst / r_timeout at episode end
  double distance_penalty = 0.0;  // alpha_dist * traveled_distance at episode end

  double total() const { return velocity_penalty + terminal_bonus + distance_penalty; }
};

struct SimConfig {
  double dt = 0.1;
  double goal_radius = 0.3;
  double timeout = 20.0;           // seconds; evaluation runs use 6.0
  double action_noise_std = 0.05;  // additive Gaussian on training actions
  RewardConfig rewards;
};

struct StepOutcome {
  AgentState agent;
  WorldState world;
  RewardTerms reward;
  Termination termination = Termination::kNone;
};

// True iff the inflated agent cuboid intersects any wall or obstacle.
bool check_collision(const AgentState& agent, const WorldState& world);

// One control step: integrate body-frame velocities, advance obstacles,
// evaluate termination (collision > goal > timeout), account rewards.
// elapsed_after is the episode time once this step completes.
StepOutcome step(const AgentState& agent, const WorldState& world,
                 const Action& action, const Vec2& goal, double elapsed_after,
                 const SimConfig& cfg);

// Camera mounting randomized once per episode.
struct CameraRandomization {
  Vec3 nominal_offset = {0.30, 0.0, 0.45};  // body frame, meters
  double nominal_pitch = 0.0;               // radians, positive looks down
  double nominal_tilt = 0.0;                // radians, yaw offset of the optical axis
  double pitch_range = deg_to_rad(3.0);
  double tilt_range = deg_to_rad(3.0);
  double offset_range = 0.02;               // meters, per axis
};

struct CameraMount {
  Vec3 offset = {0.30, 0.0, 0.45};
  double pitch = 0.0;
  double tilt = 0.0;
  bool operator==(const CameraMount&) const = default;
};

CameraMount randomize_camera(const CameraRandomization& cfg, Rng& rng);

// Planar camera pose the mount induces in the world frame.
Pose2 camera_pose(const AgentState& agent, const CameraMount& mount);

// Episode bookkeeping around step(); owns world, agent, goal and clock.
class Environment {
 public:
  Environment(const SimConfig& cfg, WorldState world, const AgentState& start,
              const Vec2& goal)
      : cfg_(cfg), world_(std::move(world)), agent_(start), goal_(goal) {}

  struct Result {
    RewardTerms reward;
    Termination termination = Termination::kNone;
  };

  Result step(const Action& action);

  const AgentState& agent() const { return agent_; }
  const WorldState& world() const { return world_; }
  const Vec2& goal() const { return goal_; }
  double elapsed() const { return elapsed_; }
  bool done() const { return termination_ != Termination::kNone; }
  Termination termination() const { return termination_; }
  Vec2 goal_in_body_frame() const {
    return rotate_inverse(goal_ - agent_.pose.position(), agent_.pose.yaw);
  }
  const SimConfig& config() const { return cfg_; }

 private:
  SimConfig cfg_;
  WorldState world_;
  AgentState agent_;
  Vec2 goal_;
  double elapsed_ = 0.0;
  Termination termination_ = Termination::kNone;
};

}  // namespace latnav
