#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "latnav/camera.hpp"
#include "latnav/depth_filter.hpp"
#include "latnav/sim.hpp"
#include "latnav/world.hpp"

namespace latnav {

struct VaeSettings {
  int latent_dim = 32;
  int base_width = 32;  // first conv stage; doubles per stage
  double beta = 1.0;    // KL weight
  double lr = 1e-3;
  int epochs = 30;
  int batch_size = 64;
  double degraded_mix = 0.3;  // fraction of training inputs drawn degraded
  bool raw_targets = false;   // ablation: reconstruct the raw render instead
                              // of the filtered target
};

struct WmSettings {
  int hidden_dim = 128;
  int layers = 2;
  double lambda_kl = 0.1;
  double lr = 1e-3;
  int epochs = 20;
  int batch_size = 32;  // training windows per batch
  int window = 40;      // truncated-sequence length
  int horizon = 10;     // seq2seq prediction horizon; also caps dream segments
  double dream_fraction = 0.5;  // share of training windows with a dream segment
  double validation_fraction = 0.2;
};

// Curriculum ramps object density and speed over the first ramp_fraction of
// iterations. kAuto turns it on for the end-to-end variants only.
enum class CurriculumMode : uint8_t { kAuto = 0, kOff = 1, kOn = 2 };

struct PpoSettings {
  int hidden_dim = 256;
  int parallel_envs = 100;
  int steps_per_env = 60;
  double lr = 1e-3;
  double clip_ratio = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int epochs = 4;
  int minibatch = 1000;
  double entropy_coef = 0.005;
  double value_coef = 0.5;
  int iterations = 300;
  CurriculumMode curriculum = CurriculumMode::kAuto;
  double curriculum_fraction = 1.0 / 3.0;
};

struct CollectSettings {
  int image_count = 5000;
  int trajectory_episodes = 400;
  double trajectory_degraded_share = 0.2;
};

struct EvalSettings {
  int episodes = 300;
  double timeout = 6.0;
  double min_goal_dist = 3.0;
  double max_goal_dist = 4.5;  // keeps goals reachable within the eval horizon
};

struct PipelineConfig {
  uint64_t seed = 0;
  std::string preset = "desk";
  WorldConfig world;              // static base; stages set dynamic_fraction
  double dynamic_fraction = 0.5;  // share of moving obstacles in dynamic stages
  SimConfig sim;
  CameraIntrinsics camera;
  CameraRandomization mount;
  DegradeConfig degrade;
  FilterConfig filter;
  VaeSettings vae;
  WmSettings wm;
  PpoSettings ppo;
  CollectSettings collect;
  EvalSettings eval;

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);

  // Hash of the canonical serialization; stamped into every artifact.
  uint64_t hash() const;

  static PipelineConfig preset_desk(uint64_t seed);
  static PipelineConfig preset_full(uint64_t seed);
  static PipelineConfig make_preset(const std::string& name, uint64_t seed);
};

// Loads a config file and applies it over the named preset; throws
// ConfigError for unknown keys, unreadable files or invalid values.
PipelineConfig load_config(const std::filesystem::path& path, const std::string& preset,
                           uint64_t seed);

}  // namespace latnav
