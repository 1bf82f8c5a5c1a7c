#include "latnav/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "latnav/camera.hpp"
#include "latnav/dataset.hpp"
#include "latnav/depth_filter.hpp"
#include "latnav/errors.hpp"
#include "latnav/rng.hpp"

namespace latnav {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;
constexpr size_t kMetricsWindow = 50;  // trailing episodes behind training metrics
constexpr double kTrainMinGoalDist = 1.5;

double sample_logp(const ActionDistribution& d, const std::array<double, 3>& a) {
  double lp = 0.0;
  for (size_t k = 0; k < 3; ++k) {
    const double z = (a[k] - d.mean[k]) / d.stddev[k];
    lp += -0.5 * z * z - std::log(d.stddev[k]) - kHalfLog2Pi;
  }
  return lp;
}

}  // namespace

void ReprStack::require(PolicyVariant v) const {
  const bool needs_vae = v == PolicyVariant::kReactive ||
                         v == PolicyVariant::kWorldModel || v == PolicyVariant::kSeq2Seq;
  if (needs_vae && vae == nullptr) {
    throw DependencyError("policy variant '" + variant_name(v) +
                          "' requires a trained encoder checkpoint");
  }
  if (v == PolicyVariant::kWorldModel && wm == nullptr) {
    throw DependencyError("policy variant 'worldmodel' requires a world model checkpoint");
  }
  if (v == PolicyVariant::kSeq2Seq && s2s == nullptr) {
    throw DependencyError("policy variant 'seq2seq' requires a sequence model checkpoint");
  }
  if (variant_uses_images(v) && filter == nullptr) {
    throw DependencyError("end-to-end variants require the depth filter configuration");
  }
}

int repr_dim_for(PolicyVariant v, const ReprStack& stack) {
  switch (v) {
    case PolicyVariant::kReactive:
      return stack.vae != nullptr ? stack.vae->config().latent_dim : 0;
    case PolicyVariant::kWorldModel:
      return stack.wm != nullptr
                 ? stack.wm->config().hidden_dim * stack.wm->config().layers
                 : 0;
    case PolicyVariant::kSeq2Seq:
      return stack.s2s != nullptr
                 ? stack.s2s->config().hidden_dim * stack.s2s->config().layers
                 : 0;
    case PolicyVariant::kBlind:
    case PolicyVariant::kE2eCnn:
    case PolicyVariant::kE2eCnnLstm:
      return 0;
  }
  return 0;
}

double curriculum_scale(CurriculumMode mode, PolicyVariant variant, int iteration,
                        int iterations, double ramp_fraction) {
  const bool active = mode == CurriculumMode::kOn ||
                      (mode == CurriculumMode::kAuto && variant_uses_images(variant));
  if (!active) return 1.0;
  const double ramp_iters = std::max(1.0, ramp_fraction * iterations);
  const double progress = std::min(1.0, iteration / ramp_iters);
  return kCurriculumFloor + (1.0 - kCurriculumFloor) * progress;
}

Episode make_episode(const PipelineConfig& cfg, uint64_t episode_seed, bool dynamic,
                     double timeout, double density_scale, double speed_scale,
                     bool eval_goal_band) {
  constexpr int kAttempts = 32;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    const uint64_t s = attempt == 0
                           ? episode_seed
                           : derive_seed(episode_seed, 0x65707400 + attempt);
    WorldConfig wc = cfg.world;
    wc.seed = derive_seed(s, 0x65777264);
    wc.object_density *= density_scale;
    wc.object_speed_max *= speed_scale;
    wc.dynamic_fraction = dynamic ? cfg.dynamic_fraction : 0.0;
    Rng rng(derive_seed(s, 0x65706f73));
    try {
      WorldState world = generate_world(wc);
      AgentState agent;
      const Vec2 footprint = {agent.half_extents.x + agent.inflation_margin,
                              agent.half_extents.y + agent.inflation_margin};
      const double min_dist = eval_goal_band ? cfg.eval.min_goal_dist : kTrainMinGoalDist;
      // Training goals stay uncapped: early successes come from long exploratory
      // sweeps across the arena, and restricting goals to a band around the
      // start measurably delays the first goal hits that bootstrap the value
      // function.
      const double max_dist = eval_goal_band ? cfg.eval.max_goal_dist : 0.0;
      auto [start, goal] = sample_start_goal(world, footprint, 0.1, min_dist, rng, max_dist);
      agent.pose = start;
      const CameraMount mount = randomize_camera(cfg.mount, rng);
      SimConfig sim = cfg.sim;
      sim.timeout = timeout;
      return Episode{Environment(sim, std::move(world), agent, goal), mount, episode_seed};
    } catch (const SamplingError&) {
      continue;  // reseeded retry; the loop exit rethrows
    }
  }
  throw SamplingError("make_episode: no admissible world after reseeded retries");
}

// ---------------------------------------------------------------------------
// Observer

Observer::Observer(PolicyVariant variant, const ReprStack& stack,
                   const CameraIntrinsics& intr)
    : variant_(variant), stack_(stack), intr_(intr) {
  stack_.require(variant_);
  reset();
}

void Observer::reset() {
  first_ = true;
  prev_cam_ = Pose2{};
  last_delta_ = Pose2{};
  last_latent_.clear();
  if (variant_ == PolicyVariant::kWorldModel) {
    belief_ = stack_.wm->initial_belief();
  } else if (variant_ == PolicyVariant::kSeq2Seq) {
    belief_ = stack_.s2s->initial_belief();
  } else {
    belief_ = Belief{};
  }
}

PolicyObs Observer::observe(const Environment& env, const CameraMount& mount,
                            const DegradeConfig* degrade_cfg, Rng* degrade_rng) {
  const Pose2 cam = camera_pose(env.agent(), mount);
  last_delta_ = first_ ? Pose2{} : relative_pose(prev_cam_, cam);
  prev_cam_ = cam;
  first_ = false;

  PolicyObs obs;
  const Vec2 goal = env.goal_in_body_frame();
  obs.goal = {static_cast<float>(goal.x), static_cast<float>(goal.y)};
  if (variant_ == PolicyVariant::kBlind) return obs;

  DepthImage img = render_depth(env.world(), env.agent(), mount, intr_);
  if (degrade_cfg != nullptr && degrade_rng != nullptr) {
    img = degrade(img, *degrade_cfg, intr_, *degrade_rng);
  }

  if (variant_uses_images(variant_)) {
    // The end-to-end nets see the filtered frame, normalized like VAE input.
    const DepthImage target = filter_target(img, *stack_.filter);
    obs.image.resize(target.size());
    const float inv = static_cast<float>(1.0 / intr_.max_range);
    for (size_t i = 0; i < target.size(); ++i) obs.image[i] = target.values[i] * inv;
    return obs;
  }

  const LatentDistribution latent = stack_.vae->encode(img);
  last_latent_.assign(latent.mu.begin(), latent.mu.end());
  if (variant_ == PolicyVariant::kReactive) {
    obs.repr = last_latent_;
  } else if (variant_ == PolicyVariant::kWorldModel) {
    auto [next, pred] = stack_.wm->measurement_update(belief_, latent.mu, last_delta_);
    belief_ = std::move(next);
    obs.repr = belief_.hidden;
  } else {
    belief_ = stack_.s2s->encode_step(belief_, latent.mu, last_delta_);
    obs.repr = belief_.hidden;
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalMetrics EvalMetrics::aggregate(std::vector<EpisodeRecord> episodes) {
  EvalMetrics m;
  m.episodes = std::move(episodes);
  if (m.episodes.empty()) {
    m.failure_rate = 1.0;
    return m;
  }
  size_t failures = 0, successes = 0;
  double traveled = 0.0, reward = 0.0;
  for (const EpisodeRecord& e : m.episodes) {
    reward += e.total_reward;
    if (e.success()) {
      ++successes;
      traveled += e.traveled_distance;
    } else {
      ++failures;
    }
  }
  m.failure_rate = static_cast<double>(failures) / static_cast<double>(m.episodes.size());
  m.traveled_distance = successes > 0 ? traveled / static_cast<double>(successes) : 0.0;
  m.mean_reward = reward / static_cast<double>(m.episodes.size());
  return m;
}

nlohmann::json EvalMetrics::to_json() const {
  nlohmann::json eps = nlohmann::json::array();
  for (const EpisodeRecord& e : episodes) {
    eps.push_back({{"seed", e.seed},
                   {"termination", static_cast<int>(e.termination)},
                   {"traveled_distance", e.traveled_distance},
                   {"total_reward", e.total_reward},
                   {"steps", e.steps}});
  }
  return {{"failure_rate", failure_rate},
          {"traveled_distance", traveled_distance},
          {"mean_reward", mean_reward},
          {"episodes", eps}};
}

EvalMetrics run_evaluation(EpisodeController& controller, const PipelineConfig& cfg,
                           bool dynamic, uint64_t eval_seed, double density_scale) {
  std::vector<EpisodeRecord> records;
  records.reserve(static_cast<size_t>(cfg.eval.episodes));
  const int max_steps =
      static_cast<int>(std::ceil(cfg.eval.timeout / cfg.sim.dt)) + 1;
  for (int i = 0; i < cfg.eval.episodes; ++i) {
    const uint64_t es = derive_seed(eval_seed, 0x65766c0000000000ULL + static_cast<uint64_t>(i));
    Episode ep = make_episode(cfg, es, dynamic, cfg.eval.timeout, density_scale, 1.0,
                              /*eval_goal_band=*/true);
    controller.reset();
    EpisodeRecord rec;
    rec.seed = es;
    while (!ep.env.done() && rec.steps < max_steps) {
      const Action a = controller.act(ep.env, ep.mount);
      const Environment::Result res = ep.env.step(a);
      rec.total_reward += res.reward.total();
      ++rec.steps;
    }
    rec.termination = ep.env.termination();
    rec.traveled_distance = ep.env.agent().traveled_distance;
    records.push_back(rec);
  }
  return EvalMetrics::aggregate(std::move(records));
}

namespace {

class PolicyController final : public EpisodeController {
 public:
  PolicyController(const PolicyNet& policy, const ReprStack& stack,
                   const CameraIntrinsics& intr)
      : policy_(policy), observer_(policy.config().variant, stack, intr) {}

  void reset() override {
    observer_.reset();
    state_ = policy_.initial_state();
  }

  Action act(const Environment& env, const CameraMount& mount) override {
    const PolicyObs obs = observer_.observe(env, mount);
    auto result = policy_.act(obs, state_);
    state_ = std::move(result.state);
    return result.dist.mean_action();
  }

 private:
  const PolicyNet& policy_;
  Observer observer_;
  PolicyState state_;
};

}  // namespace

EvalMetrics evaluate_policy(const PolicyNet& policy, const ReprStack& stack,
                            const PipelineConfig& cfg, bool dynamic,
                            uint64_t eval_seed, double density_scale) {
  PolicyController controller(policy, stack, cfg.camera);
  return run_evaluation(controller, cfg, dynamic, eval_seed, density_scale);
}

// ---------------------------------------------------------------------------
// PPO rollout collection

struct RolloutCollector::Slot {
  std::optional<Episode> episode;
  Observer observer;
  Rng rng;
  PolicyState state;
  double ep_reward = 0.0;
  int ep_steps = 0;

  Slot(PolicyVariant variant, const ReprStack& stack, const CameraIntrinsics& intr,
       uint64_t rng_seed)
      : observer(variant, stack, intr), rng(rng_seed) {}
};

RolloutCollector::RolloutCollector(PolicyVariant variant, const ReprStack& stack,
                                   const PipelineConfig& cfg, bool dynamic,
                                   uint64_t run_seed)
    : variant_(variant), stack_(stack), cfg_(cfg), dynamic_(dynamic),
      run_seed_(run_seed) {
  stack_.require(variant_);
  slots_.reserve(static_cast<size_t>(cfg_.ppo.parallel_envs));
  for (int e = 0; e < cfg_.ppo.parallel_envs; ++e) {
    slots_.push_back(std::make_unique<Slot>(
        variant_, stack_, cfg_.camera,
        derive_seed(run_seed_, 0x61637400ULL + static_cast<uint64_t>(e))));
    reset_slot(*slots_.back(), 0);
  }
}

RolloutCollector::~RolloutCollector() = default;

void RolloutCollector::reset_slot(Slot& slot, int iteration) {
  const uint64_t es = derive_seed(run_seed_, 0x7472617400000000ULL + episode_counter_++);
  const double scale = curriculum_scale(cfg_.ppo.curriculum, variant_, iteration,
                                        cfg_.ppo.iterations, cfg_.ppo.curriculum_fraction);
  slot.episode.emplace(
      make_episode(cfg_, es, dynamic_, cfg_.sim.timeout, scale, scale));
  slot.observer.reset();
  slot.state = PolicyState{};
  slot.ep_reward = 0.0;
  slot.ep_steps = 0;
}

const std::vector<EpisodeRecord>& RolloutCollector::last_episodes() const {
  return last_episodes_;
}

EvalMetrics RolloutCollector::window_metrics() const {
  return EvalMetrics::aggregate(std::vector<EpisodeRecord>(window_.begin(), window_.end()));
}

RolloutBuffer RolloutCollector::collect(const PolicyNet& policy, int iteration) {
  if (policy.config().variant != variant_) {
    throw std::invalid_argument("policy variant does not match the collector");
  }
  const int num_envs = cfg_.ppo.parallel_envs;
  const int steps = cfg_.ppo.steps_per_env;
  const int repr_dim = repr_dim_for(variant_, stack_);
  const bool images = variant_uses_images(variant_);
  const bool recurrent = variant_is_recurrent(variant_);
  const int image_size = images ? cfg_.camera.width * cfg_.camera.height : 0;

  RolloutBuffer buf;
  buf.num_envs = num_envs;
  buf.steps = steps;
  buf.repr_dim = repr_dim;
  buf.image_size = image_size;
  buf.repr.resize(buf.size() * static_cast<size_t>(repr_dim));
  buf.images.resize(buf.size() * static_cast<size_t>(image_size));
  buf.goals.resize(buf.size() * 2);
  buf.actions.resize(buf.size() * 3);
  buf.logp.resize(buf.size());
  buf.values.resize(buf.size());
  buf.rewards.resize(buf.size());
  buf.dones.assign(buf.size(), 0);
  buf.bootstrap_values.resize(static_cast<size_t>(num_envs));

  for (auto& slot : slots_) {
    if (slot->state.hidden.empty() && recurrent) slot->state = policy.initial_state();
  }
  if (recurrent) {
    const size_t lh = policy.initial_state().hidden.size();
    buf.h0.resize(static_cast<size_t>(num_envs) * lh);
    buf.c0.resize(static_cast<size_t>(num_envs) * lh);
    for (int e = 0; e < num_envs; ++e) {
      std::copy(slots_[size_t(e)]->state.hidden.begin(), slots_[size_t(e)]->state.hidden.end(),
                buf.h0.begin() + size_t(e) * lh);
      std::copy(slots_[size_t(e)]->state.cell.begin(), slots_[size_t(e)]->state.cell.end(),
                buf.c0.begin() + size_t(e) * lh);
    }
  }
  last_episodes_.clear();

  std::vector<PolicyObs> obs(static_cast<size_t>(num_envs));
  std::vector<PolicyState> states(static_cast<size_t>(num_envs));
  const double noise_std = cfg_.sim.action_noise_std;

  for (int t = 0; t < steps; ++t) {
    for (int e = 0; e < num_envs; ++e) {
      Slot& slot = *slots_[size_t(e)];
      obs[size_t(e)] = slot.observer.observe(slot.episode->env, slot.episode->mount);
      states[size_t(e)] = slot.state;
    }
    const auto results = policy.act_batch(obs, states);
    for (int e = 0; e < num_envs; ++e) {
      Slot& slot = *slots_[size_t(e)];
      const size_t i = size_t(e) * static_cast<size_t>(steps) + static_cast<size_t>(t);
      std::array<double, 3> a;
      for (size_t k = 0; k < 3; ++k) {
        a[k] = results[size_t(e)].dist.mean[k] +
               results[size_t(e)].dist.stddev[k] * slot.rng.normal(0.0, 1.0);
      }
      std::copy(obs[size_t(e)].repr.begin(), obs[size_t(e)].repr.end(),
                buf.repr.begin() + i * static_cast<size_t>(repr_dim));
      std::copy(obs[size_t(e)].image.begin(), obs[size_t(e)].image.end(),
                buf.images.begin() + i * static_cast<size_t>(image_size));
      buf.goals[i * 2] = obs[size_t(e)].goal[0];
      buf.goals[i * 2 + 1] = obs[size_t(e)].goal[1];
      for (size_t k = 0; k < 3; ++k) buf.actions[i * 3 + k] = static_cast<float>(a[k]);
      buf.logp[i] = static_cast<float>(sample_logp(results[size_t(e)].dist, a));
      buf.values[i] = static_cast<float>(results[size_t(e)].value);
      slot.state = results[size_t(e)].state;

      const Action exec = Action{a[0] + noise_std * slot.rng.normal(0.0, 1.0),
                                 a[1] + noise_std * slot.rng.normal(0.0, 1.0),
                                 a[2] + noise_std * slot.rng.normal(0.0, 1.0)}
                              .clipped();
      const Environment::Result res = slot.episode->env.step(exec);
      buf.rewards[i] = static_cast<float>(res.reward.total());
      slot.ep_reward += res.reward.total();
      ++slot.ep_steps;
      if (slot.episode->env.done()) {
        buf.dones[i] = 1;
        EpisodeRecord rec;
        rec.seed = slot.episode->seed;
        rec.termination = slot.episode->env.termination();
        rec.traveled_distance = slot.episode->env.agent().traveled_distance;
        rec.total_reward = slot.ep_reward;
        rec.steps = slot.ep_steps;
        last_episodes_.push_back(rec);
        window_.push_back(rec);
        while (window_.size() > kMetricsWindow) window_.pop_front();
        reset_slot(slot, iteration);
        slot.state = policy.initial_state();
      }
    }
  }

  // Bootstrap values from a copy of each observer so the belief pipelines do
  // not see the boundary frame twice.
  for (int e = 0; e < num_envs; ++e) {
    Slot& slot = *slots_[size_t(e)];
    Observer peek = slot.observer;
    obs[size_t(e)] = peek.observe(slot.episode->env, slot.episode->mount);
    states[size_t(e)] = slot.state;
  }
  const auto results = policy.act_batch(obs, states);
  for (int e = 0; e < num_envs; ++e) {
    buf.bootstrap_values[size_t(e)] = static_cast<float>(results[size_t(e)].value);
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Trajectory collection

CollectStats collect_trajectories(const PolicyNet& baseline, const ConvVae& vae,
                                  const PipelineConfig& cfg,
                                  const std::filesystem::path& out_dir,
                                  const nlohmann::json& provenance) {
  if (baseline.config().variant != PolicyVariant::kReactive) {
    throw std::invalid_argument("trajectory collection rolls out the reactive baseline");
  }
  ReprStack stack;
  stack.vae = &vae;
  TrajectoryDatasetWriter writer(out_dir, vae.config().latent_dim, cfg.seed, cfg.hash(),
                                 provenance);
  Observer observer(PolicyVariant::kReactive, stack, cfg.camera);

  CollectStats stats;
  stats.episodes = cfg.collect.trajectory_episodes;
  size_t failures = 0, total_steps = 0;
  const int max_steps = static_cast<int>(std::ceil(cfg.sim.timeout / cfg.sim.dt)) + 1;

  for (int i = 0; i < cfg.collect.trajectory_episodes; ++i) {
    const uint64_t es =
        derive_seed(cfg.seed, 0x636f6c0000000000ULL + static_cast<uint64_t>(i));
    Rng rng(derive_seed(es, 0x61637472));
    const bool degraded = rng.bernoulli(cfg.collect.trajectory_degraded_share);
    Episode ep = make_episode(cfg, es, /*dynamic=*/true, cfg.sim.timeout);
    observer.reset();
    PolicyState state = baseline.initial_state();

    Trajectory traj;
    traj.degraded = degraded;
    while (!ep.env.done() && static_cast<int>(traj.steps.size()) < max_steps) {
      const PolicyObs obs = observer.observe(ep.env, ep.mount,
                                             degraded ? &cfg.degrade : nullptr,
                                             degraded ? &rng : nullptr);
      const auto r = baseline.act(obs, state);
      std::array<double, 3> a;
      for (size_t k = 0; k < 3; ++k) {
        a[k] = r.dist.mean[k] + r.dist.stddev[k] * rng.normal(0.0, 1.0);
      }
      const Action exec = Action{a[0] + cfg.sim.action_noise_std * rng.normal(0.0, 1.0),
                                 a[1] + cfg.sim.action_noise_std * rng.normal(0.0, 1.0),
                                 a[2] + cfg.sim.action_noise_std * rng.normal(0.0, 1.0)}
                              .clipped();
      const Environment::Result res = ep.env.step(exec);
      TrajectoryStep step;
      step.latent = observer.last_latent();
      step.delta = observer.last_delta();
      step.action = exec;
      step.reward = res.reward.total();
      traj.steps.push_back(std::move(step));
    }
    traj.termination = ep.env.termination();
    if (traj.termination != Termination::kGoal) ++failures;
    if (traj.steps.size() >= 2) {
      writer.append(traj);
      ++stats.kept;
      total_steps += traj.steps.size();
    }
  }
  writer.finalize();
  stats.failure_rate =
      static_cast<double>(failures) / std::max(1, cfg.collect.trajectory_episodes);
  stats.mean_length =
      stats.kept > 0 ? static_cast<double>(total_steps) / stats.kept : 0.0;
  return stats;
}

}  // namespace latnav
