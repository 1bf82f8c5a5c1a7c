#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <vector>

#include <json.hpp>

#include "latnav/config.hpp"
#include "latnav/policy.hpp"
#include "latnav/sim.hpp"
#include "latnav/vae.hpp"
#include "latnav/world_model.hpp"

namespace latnav {

// Frozen upstream models an observation pipeline needs; ownership stays with
// the caller. Which pointers must be set depends on the policy variant:
// reactive needs the VAE, worldmodel VAE + world model, seq2seq VAE +
// sequence encoder, the end-to-end variants the filter, blind nothing.
struct ReprStack {
  const ConvVae* vae = nullptr;
  const WorldModel* wm = nullptr;
  const Seq2SeqModel* s2s = nullptr;
  const FilterConfig* filter = nullptr;

  void require(PolicyVariant v) const;  // throws DependencyError when missing
};

// Representation length the policy sees for a variant (goal excluded).
int repr_dim_for(PolicyVariant v, const ReprStack& stack);

// Curriculum multiplier for object density and speed: linear ramp from
// kCurriculumFloor to 1 over the first ramp_fraction of iterations, active
// for the end-to-end variants under kAuto.
inline constexpr double kCurriculumFloor = 0.2;
double curriculum_scale(CurriculumMode mode, PolicyVariant variant, int iteration,
                        int iterations, double ramp_fraction);

// World + agent + goal + camera drawn for one episode seed. Deterministic;
// retries unsatisfiable draws on derived sub-seeds.
struct Episode {
  Environment env;
  CameraMount mount;
  uint64_t seed = 0;
};

Episode make_episode(const PipelineConfig& cfg, uint64_t episode_seed, bool dynamic,
                     double timeout, double density_scale = 1.0,
                     double speed_scale = 1.0, bool eval_goal_band = false);

// Per-environment observation pipeline: renders the depth frame, runs the
// frozen stack for the variant and tracks the camera-motion increment and
// belief state across steps. reset() starts a fresh episode.
class Observer {
 public:
  Observer(PolicyVariant variant, const ReprStack& stack, const CameraIntrinsics& intr);

  void reset();
  // When degrade_rng is non-null the render is degraded before entering the
  // stack (the sensing-noise share of data collection); evaluation passes
  // nullptr for clean frames.
  PolicyObs observe(const Environment& env, const CameraMount& mount,
                    const DegradeConfig* degrade_cfg = nullptr,
                    Rng* degrade_rng = nullptr);

  // Last VAE latent mean and camera increment, for trajectory recording.
  const std::vector<float>& last_latent() const { return last_latent_; }
  const Pose2& last_delta() const { return last_delta_; }

 private:
  PolicyVariant variant_;
  ReprStack stack_;
  CameraIntrinsics intr_;
  bool first_ = true;
  Pose2 prev_cam_;
  Belief belief_;
  std::vector<float> last_latent_;
  Pose2 last_delta_;
};

struct EpisodeRecord {
  uint64_t seed = 0;
  Termination termination = Termination::kNone;
  double traveled_distance = 0.0;
  double total_reward = 0.0;
  int steps = 0;

  bool success() const { return termination == Termination::kGoal; }
};

// failure = collision or timeout; traveled_distance averages successes only.
struct EvalMetrics {
  double failure_rate = 0.0;
  double traveled_distance = 0.0;
  double mean_reward = 0.0;
  std::vector<EpisodeRecord> episodes;

  static EvalMetrics aggregate(std::vector<EpisodeRecord> episodes);
  nlohmann::json to_json() const;
};

// Episode-level controller driving the shared evaluation loop.
class EpisodeController {
 public:
  virtual ~EpisodeController() = default;
  virtual void reset() {}
  virtual Action act(const Environment& env, const CameraMount& mount) = 0;
};

// Runs cfg.eval.episodes episodes on seeds derived from eval_seed with the
// evaluation timeout and goal band; pure function of (controller, cfg, seeds).
EvalMetrics run_evaluation(EpisodeController& controller, const PipelineConfig& cfg,
                           bool dynamic, uint64_t eval_seed,
                           double density_scale = 1.0);

// Policy evaluated at the distribution mean over clean frames.
EvalMetrics evaluate_policy(const PolicyNet& policy, const ReprStack& stack,
                            const PipelineConfig& cfg, bool dynamic,
                            uint64_t eval_seed, double density_scale = 1.0);

// Vectorized on-policy rollout collection for PPO. Environments persist
// across collect() calls; episodes ending mid-buffer are recorded and the
// slot restarts on a fresh derived seed.
class RolloutCollector {
 public:
  RolloutCollector(PolicyVariant variant, const ReprStack& stack,
                   const PipelineConfig& cfg, bool dynamic, uint64_t run_seed);
  ~RolloutCollector();

  RolloutBuffer collect(const PolicyNet& policy, int iteration);

  // Episodes completed during the last collect() and a trailing window over
  // the whole run, for the per-iteration metrics lines.
  const std::vector<EpisodeRecord>& last_episodes() const;
  EvalMetrics window_metrics() const;

 private:
  struct Slot;
  PolicyVariant variant_;
  ReprStack stack_;
  PipelineConfig cfg_;
  bool dynamic_;
  uint64_t run_seed_;
  uint64_t episode_counter_ = 0;
  std::vector<std::unique_ptr<Slot>> slots_;
  std::vector<EpisodeRecord> last_episodes_;
  std::deque<EpisodeRecord> window_;

  void reset_slot(Slot& slot, int iteration);
};

// Rolls the baseline policy (sampled actions) through the frozen VAE in
// dynamic worlds and writes the latent-trajectory container; a
// trajectory_degraded_share of episodes runs on degraded sensing.
struct CollectStats {
  int episodes = 0;
  int kept = 0;  // trajectories long enough to train on
  double failure_rate = 0.0;
  double mean_length = 0.0;
};

CollectStats collect_trajectories(const PolicyNet& baseline, const ConvVae& vae,
                                  const PipelineConfig& cfg,
                                  const std::filesystem::path& out_dir,
                                  const nlohmann::json& provenance);

}  // namespace latnav
