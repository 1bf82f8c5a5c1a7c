#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "latnav/config.hpp"
#include "latnav/sim.hpp"

namespace latnav {

enum class PolicyVariant : uint8_t {
  kReactive = 0,
  kWorldModel = 1,
  kSeq2Seq = 2,
  kBlind = 3,
  kE2eCnn = 4,
  kE2eCnnLstm = 5,
};

std::string variant_name(PolicyVariant v);
PolicyVariant parse_variant(const std::string& name);  // throws ConfigError
bool variant_uses_images(PolicyVariant v);
bool variant_is_recurrent(PolicyVariant v);

// Representation plus goal; image is the normalized filtered depth frame and
// only set for the end-to-end variants.
struct PolicyObs {
  std::vector<float> repr;
  std::vector<float> image;
  std::array<float, 2> goal = {0.0f, 0.0f};
};

// Recurrent policy state; empty for the feedforward variants.
struct PolicyState {
  std::vector<float> hidden;
  std::vector<float> cell;
};

// Diagonal Gaussian over (vx, vy, wz); the mean is squashed into the action
// limits, samples are clipped by the simulator on application.
struct ActionDistribution {
  std::array<double, 3> mean = {0.0, 0.0, 0.0};
  std::array<double, 3> stddev = {0.0, 0.0, 0.0};

  Action mean_action() const { return Action{mean[0], mean[1], mean[2]}; }
};

// One PPO iteration's worth of transitions, env-major: index(e, t) =
// e * steps + t. Actions are the unclipped samples; logp and values come
// from the behavior parameters. h0/c0 hold each env's recurrent state at the
// start of the buffer (recurrent variant only).
struct RolloutBuffer {
  int num_envs = 0;
  int steps = 0;
  int repr_dim = 0;
  int image_size = 0;

  std::vector<float> repr;
  std::vector<float> images;
  std::vector<float> goals;
  std::vector<float> actions;
  std::vector<float> logp;
  std::vector<float> values;
  std::vector<float> rewards;
  std::vector<uint8_t> dones;
  std::vector<float> bootstrap_values;  // one per env
  std::vector<float> h0, c0;

  size_t size() const { return static_cast<size_t>(num_envs) * steps; }
};

struct PpoStats {
  double initial_mean_ratio = 0.0;     // before any update, all samples
  double initial_ratio_max_dev = 0.0;  // max |ratio - 1| before any update
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

class PolicyNet {
 public:
  struct Config {
    PolicyVariant variant = PolicyVariant::kReactive;
    int repr_dim = 32;      // representation length; 0 for blind and e2e
    int image_width = 0;    // e2e variants only
    int image_height = 0;
    int hidden_dim = 256;   // policy/value MLP width
    int cnn_base = 8;       // first conv stage channels, doubling per stage
    int cnn_feature = 128;  // flattened conv output projection
    int lstm_hidden = 128;  // recurrent e2e variant
    bool double_precision = false;
  };

  PolicyNet(const Config& cfg, uint64_t seed);
  ~PolicyNet();
  PolicyNet(PolicyNet&&) noexcept;
  PolicyNet& operator=(PolicyNet&&) noexcept;

  const Config& config() const;

  PolicyState initial_state() const;

  struct ActResult {
    ActionDistribution dist;
    double value = 0.0;
    PolicyState state;
  };
  ActResult act(const PolicyObs& obs, const PolicyState& state) const;
  std::vector<ActResult> act_batch(const std::vector<PolicyObs>& obs,
                                   const std::vector<PolicyState>& states) const;

  size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& flat);

  void save(const std::filesystem::path& path) const;
  static PolicyNet load(const std::filesystem::path& path);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  friend PpoStats ppo_update(PolicyNet&, const RolloutBuffer&, const PpoSettings&,
                             uint64_t);
};

// Clipped-surrogate update over the buffer: GAE advantages (normalized unless
// degenerate), minibatched Adam for cfg.epochs. The recurrent variant
// minibatches whole env sequences and replays them with state resets at
// episode boundaries.
PpoStats ppo_update(PolicyNet& policy, const RolloutBuffer& buffer,
                    const PpoSettings& cfg, uint64_t seed);

}  // namespace latnav
