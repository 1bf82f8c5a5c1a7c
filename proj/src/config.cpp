#include "latnav/config.hpp"

#include <fstream>
#include <set>

#include "latnav/artifacts.hpp"
#include "latnav/errors.hpp"

namespace latnav {

namespace {

// Wraps one JSON object: reads known keys, then rejects leftovers so config
// typos fail loudly instead of silently using defaults.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) {
      throw ConfigError("config section '" + name_ + "' must be an object");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const nlohmann::json& sub(const char* key) { return j_.at(key); }

  void finish() {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) {
        throw ConfigError("unknown config key '" + name_ + "." + key + "'");
      }
    }
  }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

std::string category_name(ObstacleCategory c) {
  switch (c) {
    case ObstacleCategory::kBox: return "box";
    case ObstacleCategory::kCylinder: return "cylinder";
    case ObstacleCategory::kPanel: return "panel";
    case ObstacleCategory::kSlab: return "slab";
  }
  return "box";
}

ObstacleCategory category_from(const std::string& s) {
  if (s == "box") return ObstacleCategory::kBox;
  if (s == "cylinder") return ObstacleCategory::kCylinder;
  if (s == "panel") return ObstacleCategory::kPanel;
  if (s == "slab") return ObstacleCategory::kSlab;
  throw ConfigError("unknown obstacle category '" + s + "'");
}

void apply_world(WorldConfig& w, const nlohmann::json& j) {
  Section s(j, "world");
  double ax = w.arena_extent.x, ay = w.arena_extent.y;
  s.get("arena_x", ax);
  s.get("arena_y", ay);
  w.arena_extent = {ax, ay};
  s.get("narrowness_min", w.narrowness_min);
  s.get("narrowness_max", w.narrowness_max);
  s.get("wall_height_min", w.wall_height_min);
  s.get("wall_height_max", w.wall_height_max);
  s.get("object_density", w.object_density);
  s.get("object_speed_max", w.object_speed_max);
  s.get("max_interior_walls", w.max_interior_walls);
  s.get("min_clearance_width", w.min_clearance_width);
  if (s.has("categories")) {
    std::vector<std::string> names;
    try {
      names = s.sub("categories").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("world.categories must be a list of names");
    }
    w.object_categories.clear();
    for (const std::string& n : names) w.object_categories.push_back(category_from(n));
  }
  s.finish();
}

nlohmann::json world_json(const WorldConfig& w) {
  nlohmann::json j;
  j["arena_x"] = w.arena_extent.x;
  j["arena_y"] = w.arena_extent.y;
  j["narrowness_min"] = w.narrowness_min;
  j["narrowness_max"] = w.narrowness_max;
  j["wall_height_min"] = w.wall_height_min;
  j["wall_height_max"] = w.wall_height_max;
  j["object_density"] = w.object_density;
  j["object_speed_max"] = w.object_speed_max;
  j["max_interior_walls"] = w.max_interior_walls;
  j["min_clearance_width"] = w.min_clearance_width;
  nlohmann::json cats = nlohmann::json::array();
  for (ObstacleCategory c : w.object_categories) cats.push_back(category_name(c));
  j["categories"] = cats;
  return j;
}

void apply_sim(SimConfig& c, const nlohmann::json& j) {
  Section s(j, "sim");
  s.get("dt", c.dt);
  s.get("goal_radius", c.goal_radius);
  s.get("timeout", c.timeout);
  s.get("action_noise_std", c.action_noise_std);
  s.get("r_obst", c.rewards.r_obst);
  s.get("r_goal", c.rewards.r_goal);
  s.get("r_timeout", c.rewards.r_timeout);
  s.get("alpha_lat", c.rewards.alpha_lat);
  s.get("alpha_back", c.rewards.alpha_back);
  s.get("alpha_dist", c.rewards.alpha_dist);
  s.finish();
}

nlohmann::json sim_json(const SimConfig& c) {
  nlohmann::json j;
  j["dt"] = c.dt;
  j["goal_radius"] = c.goal_radius;
  j["timeout"] = c.timeout;
  j["action_noise_std"] = c.action_noise_std;
  j["r_obst"] = c.rewards.r_obst;
  j["r_goal"] = c.rewards.r_goal;
  j["r_timeout"] = c.rewards.r_timeout;
  j["alpha_lat"] = c.rewards.alpha_lat;
  j["alpha_back"] = c.rewards.alpha_back;
  j["alpha_dist"] = c.rewards.alpha_dist;
  return j;
}

void apply_camera(CameraIntrinsics& c, const nlohmann::json& j) {
  Section s(j, "camera");
  s.get("width", c.width);
  s.get("height", c.height);
  s.get("hfov_deg", c.hfov_deg);
  s.get("vfov_deg", c.vfov_deg);
  s.get("min_range", c.min_range);
  s.get("max_range", c.max_range);
  s.finish();
}

nlohmann::json camera_json(const CameraIntrinsics& c) {
  nlohmann::json j;
  j["width"] = c.width;
  j["height"] = c.height;
  j["hfov_deg"] = c.hfov_deg;
  j["vfov_deg"] = c.vfov_deg;
  j["min_range"] = c.min_range;
  j["max_range"] = c.max_range;
  return j;
}

void apply_degrade(DegradeConfig& c, const nlohmann::json& j) {
  Section s(j, "degrade");
  s.get("noise_scale", c.noise_scale);
  s.get("edge_threshold", c.edge_threshold);
  s.get("dropout_rate", c.dropout_rate);
  s.finish();
}

nlohmann::json degrade_json(const DegradeConfig& c) {
  nlohmann::json j;
  j["noise_scale"] = c.noise_scale;
  j["edge_threshold"] = c.edge_threshold;
  j["dropout_rate"] = c.dropout_rate;
  return j;
}

void apply_filter(FilterConfig& c, const nlohmann::json& j) {
  Section s(j, "filter");
  if (s.has("dilation_shape")) {
    const std::string shape = s.sub("dilation_shape").get<std::string>();
    if (shape == "diamond") {
      c.dilation_shape = KernelShape::kDiamond;
    } else if (shape == "full") {
      c.dilation_shape = KernelShape::kFull;
    } else {
      throw ConfigError("filter.dilation_shape must be 'diamond' or 'full'");
    }
  }
  s.get("dilation_size", c.dilation_size);
  s.get("closing_size", c.closing_size);
  s.get("large_dilation_size", c.large_dilation_size);
  s.get("large_dilation_reps", c.large_dilation_reps);
  s.get("bilateral_sigma_space", c.bilateral_sigma_space);
  s.get("bilateral_sigma_depth", c.bilateral_sigma_depth);
  s.finish();
}

nlohmann::json filter_json(const FilterConfig& c) {
  nlohmann::json j;
  j["dilation_shape"] = c.dilation_shape == KernelShape::kDiamond ? "diamond" : "full";
  j["dilation_size"] = c.dilation_size;
  j["closing_size"] = c.closing_size;
  j["large_dilation_size"] = c.large_dilation_size;
  j["large_dilation_reps"] = c.large_dilation_reps;
  j["bilateral_sigma_space"] = c.bilateral_sigma_space;
  j["bilateral_sigma_depth"] = c.bilateral_sigma_depth;
  return j;
}

void apply_vae(VaeSettings& c, const nlohmann::json& j) {
  Section s(j, "vae");
  s.get("latent_dim", c.latent_dim);
  s.get("base_width", c.base_width);
  s.get("beta", c.beta);
  s.get("lr", c.lr);
  s.get("epochs", c.epochs);
  s.get("batch_size", c.batch_size);
  s.get("degraded_mix", c.degraded_mix);
  s.get("raw_targets", c.raw_targets);
  s.finish();
}

nlohmann::json vae_json(const VaeSettings& c) {
  nlohmann::json j;
  j["latent_dim"] = c.latent_dim;
  j["base_width"] = c.base_width;
  j["beta"] = c.beta;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["degraded_mix"] = c.degraded_mix;
  j["raw_targets"] = c.raw_targets;
  return j;
}

void apply_wm(WmSettings& c, const nlohmann::json& j) {
  Section s(j, "world_model");
  s.get("hidden_dim", c.hidden_dim);
  s.get("layers", c.layers);
  s.get("lambda_kl", c.lambda_kl);
  s.get("lr", c.lr);
  s.get("epochs", c.epochs);
  s.get("batch_size", c.batch_size);
  s.get("window", c.window);
  s.get("horizon", c.horizon);
  s.get("dream_fraction", c.dream_fraction);
  s.get("validation_fraction", c.validation_fraction);
  s.finish();
}

nlohmann::json wm_json(const WmSettings& c) {
  nlohmann::json j;
  j["hidden_dim"] = c.hidden_dim;
  j["layers"] = c.layers;
  j["lambda_kl"] = c.lambda_kl;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["window"] = c.window;
  j["horizon"] = c.horizon;
  j["dream_fraction"] = c.dream_fraction;
  j["validation_fraction"] = c.validation_fraction;
  return j;
}

void apply_ppo(PpoSettings& c, const nlohmann::json& j) {
  Section s(j, "ppo");
  s.get("hidden_dim", c.hidden_dim);
  s.get("parallel_envs", c.parallel_envs);
  s.get("steps_per_env", c.steps_per_env);
  s.get("lr", c.lr);
  s.get("clip_ratio", c.clip_ratio);
  s.get("gamma", c.gamma);
  s.get("gae_lambda", c.gae_lambda);
  s.get("epochs", c.epochs);
  s.get("minibatch", c.minibatch);
  s.get("entropy_coef", c.entropy_coef);
  s.get("value_coef", c.value_coef);
  s.get("iterations", c.iterations);
  s.get("curriculum_fraction", c.curriculum_fraction);
  if (s.has("curriculum")) {
    const std::string mode = s.sub("curriculum").get<std::string>();
    if (mode == "auto") {
      c.curriculum = CurriculumMode::kAuto;
    } else if (mode == "off") {
      c.curriculum = CurriculumMode::kOff;
    } else if (mode == "on") {
      c.curriculum = CurriculumMode::kOn;
    } else {
      throw ConfigError("ppo.curriculum must be 'auto', 'off' or 'on'");
    }
  }
  s.finish();
}

nlohmann::json ppo_json(const PpoSettings& c) {
  nlohmann::json j;
  j["hidden_dim"] = c.hidden_dim;
  j["parallel_envs"] = c.parallel_envs;
  j["steps_per_env"] = c.steps_per_env;
  j["lr"] = c.lr;
  j["clip_ratio"] = c.clip_ratio;
  j["gamma"] = c.gamma;
  j["gae_lambda"] = c.gae_lambda;
  j["epochs"] = c.epochs;
  j["minibatch"] = c.minibatch;
  j["entropy_coef"] = c.entropy_coef;
  j["value_coef"] = c.value_coef;
  j["iterations"] = c.iterations;
  j["curriculum_fraction"] = c.curriculum_fraction;
  j["curriculum"] = c.curriculum == CurriculumMode::kAuto
                        ? "auto"
                        : (c.curriculum == CurriculumMode::kOff ? "off" : "on");
  return j;
}

void apply_collect(CollectSettings& c, const nlohmann::json& j) {
  Section s(j, "collect");
  s.get("image_count", c.image_count);
  s.get("trajectory_episodes", c.trajectory_episodes);
  s.get("trajectory_degraded_share", c.trajectory_degraded_share);
  s.finish();
}

nlohmann::json collect_json(const CollectSettings& c) {
  nlohmann::json j;
  j["image_count"] = c.image_count;
  j["trajectory_episodes"] = c.trajectory_episodes;
  j["trajectory_degraded_share"] = c.trajectory_degraded_share;
  return j;
}

void apply_eval(EvalSettings& c, const nlohmann::json& j) {
  Section s(j, "eval");
  s.get("episodes", c.episodes);
  s.get("timeout", c.timeout);
  s.get("min_goal_dist", c.min_goal_dist);
  s.get("max_goal_dist", c.max_goal_dist);
  s.finish();
}

nlohmann::json eval_json(const EvalSettings& c) {
  nlohmann::json j;
  j["episodes"] = c.episodes;
  j["timeout"] = c.timeout;
  j["min_goal_dist"] = c.min_goal_dist;
  j["max_goal_dist"] = c.max_goal_dist;
  return j;
}

void apply_mount(CameraRandomization& c, const nlohmann::json& j) {
  Section s(j, "mount");
  double x = c.nominal_offset.x, y = c.nominal_offset.y, z = c.nominal_offset.z;
  s.get("offset_x", x);
  s.get("offset_y", y);
  s.get("offset_z", z);
  c.nominal_offset = {x, y, z};
  s.get("pitch_range", c.pitch_range);
  s.get("tilt_range", c.tilt_range);
  s.get("offset_range", c.offset_range);
  s.finish();
}

nlohmann::json mount_json(const CameraRandomization& c) {
  nlohmann::json j;
  j["offset_x"] = c.nominal_offset.x;
  j["offset_y"] = c.nominal_offset.y;
  j["offset_z"] = c.nominal_offset.z;
  j["pitch_range"] = c.pitch_range;
  j["tilt_range"] = c.tilt_range;
  j["offset_range"] = c.offset_range;
  return j;
}

void apply_over(PipelineConfig& cfg, const nlohmann::json& j) {
  Section s(j, "<root>");
  if (s.has("seed")) cfg.seed = s.sub("seed").get<uint64_t>();
  if (s.has("preset")) cfg.preset = s.sub("preset").get<std::string>();
  s.get("dynamic_fraction", cfg.dynamic_fraction);
  if (s.has("world")) apply_world(cfg.world, s.sub("world"));
  if (s.has("sim")) apply_sim(cfg.sim, s.sub("sim"));
  if (s.has("camera")) apply_camera(cfg.camera, s.sub("camera"));
  if (s.has("mount")) apply_mount(cfg.mount, s.sub("mount"));
  if (s.has("degrade")) apply_degrade(cfg.degrade, s.sub("degrade"));
  if (s.has("filter")) apply_filter(cfg.filter, s.sub("filter"));
  if (s.has("vae")) apply_vae(cfg.vae, s.sub("vae"));
  if (s.has("world_model")) apply_wm(cfg.wm, s.sub("world_model"));
  if (s.has("ppo")) apply_ppo(cfg.ppo, s.sub("ppo"));
  if (s.has("collect")) apply_collect(cfg.collect, s.sub("collect"));
  if (s.has("eval")) apply_eval(cfg.eval, s.sub("eval"));
  s.finish();
}

void check(bool ok, const char* msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

void PipelineConfig::validate() const {
  check(preset == "desk" || preset == "full", "preset must be 'desk' or 'full'");
  world.validate();
  camera.validate();
  filter.validate();
  check(dynamic_fraction >= 0.0 && dynamic_fraction <= 1.0,
        "dynamic_fraction must be in [0,1]");
  check(sim.dt > 0.0, "sim.dt must be positive");
  check(sim.timeout > 0.0, "sim.timeout must be positive");
  check(sim.goal_radius > 0.0, "sim.goal_radius must be positive");
  check(vae.latent_dim >= 1, "vae.latent_dim must be >= 1");
  check(vae.base_width >= 1, "vae.base_width must be >= 1");
  check(vae.beta >= 0.0, "vae.beta must be >= 0");
  check(vae.lr > 0.0, "vae.lr must be positive");
  check(vae.epochs >= 1 && vae.batch_size >= 1, "vae epochs/batch must be >= 1");
  check(vae.degraded_mix >= 0.0 && vae.degraded_mix <= 1.0,
        "vae.degraded_mix must be in [0,1]");
  check(camera.width % 16 == 0 && camera.height % 16 == 0,
        "camera resolution must be divisible by 16 for the conv stack");
  check(wm.hidden_dim >= 1 && wm.layers >= 1, "world_model dims must be >= 1");
  check(wm.lambda_kl >= 0.0, "world_model.lambda_kl must be >= 0");
  check(wm.window >= 2, "world_model.window must be >= 2");
  check(wm.horizon >= 0, "world_model.horizon must be >= 0");
  check(wm.horizon < wm.window, "world_model.horizon must be below the window");
  check(wm.dream_fraction >= 0.0 && wm.dream_fraction <= 1.0,
        "world_model.dream_fraction must be in [0,1]");
  check(wm.validation_fraction > 0.0 && wm.validation_fraction < 1.0,
        "world_model.validation_fraction must be in (0,1)");
  check(ppo.parallel_envs >= 1 && ppo.steps_per_env >= 1, "ppo rollout sizes must be >= 1");
  check(ppo.clip_ratio > 0.0, "ppo.clip_ratio must be positive");
  check(ppo.gamma > 0.0 && ppo.gamma <= 1.0, "ppo.gamma must be in (0,1]");
  check(ppo.gae_lambda >= 0.0 && ppo.gae_lambda <= 1.0, "ppo.gae_lambda must be in [0,1]");
  check(ppo.epochs >= 1 && ppo.iterations >= 1, "ppo epochs/iterations must be >= 1");
  check(ppo.minibatch >= 1 && ppo.minibatch <= ppo.parallel_envs * ppo.steps_per_env,
        "ppo.minibatch must fit into one rollout");
  check(ppo.curriculum_fraction > 0.0 && ppo.curriculum_fraction <= 1.0,
        "ppo.curriculum_fraction must be in (0,1]");
  check(collect.image_count >= 1, "collect.image_count must be >= 1");
  check(collect.trajectory_episodes >= 1, "collect.trajectory_episodes must be >= 1");
  check(collect.trajectory_degraded_share >= 0.0 && collect.trajectory_degraded_share <= 1.0,
        "collect.trajectory_degraded_share must be in [0,1]");
  check(eval.episodes >= 1, "eval.episodes must be >= 1");
  check(eval.timeout > 0.0, "eval.timeout must be positive");
  check(eval.min_goal_dist > 0.0, "eval.min_goal_dist must be positive");
  check(eval.max_goal_dist == 0.0 || eval.max_goal_dist >= eval.min_goal_dist,
        "eval.max_goal_dist must be 0 or >= min_goal_dist");
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["preset"] = preset;
  j["dynamic_fraction"] = dynamic_fraction;
  j["world"] = world_json(world);
  j["sim"] = sim_json(sim);
  j["camera"] = camera_json(camera);
  j["mount"] = mount_json(mount);
  j["degrade"] = degrade_json(degrade);
  j["filter"] = filter_json(filter);
  j["vae"] = vae_json(vae);
  j["world_model"] = wm_json(wm);
  j["ppo"] = ppo_json(ppo);
  j["collect"] = collect_json(collect);
  j["eval"] = eval_json(eval);
  return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  apply_over(cfg, j);
  return cfg;
}

uint64_t PipelineConfig::hash() const {
  // nlohmann::json keeps object keys sorted, so dump() is canonical.
  return fnv1a(to_json().dump());
}

PipelineConfig PipelineConfig::preset_desk(uint64_t seed) {
  PipelineConfig cfg;
  cfg.seed = seed;
  cfg.preset = "desk";
  cfg.camera.width = 64;
  cfg.camera.height = 32;
  cfg.vae.base_width = 16;
  cfg.vae.beta = 1.0 / (64.0 * 32.0);  // per-pixel-sum ELBO at mean-MSE scale
  cfg.vae.epochs = 25;
  cfg.wm.epochs = 25;
  // PPO at desk scale needs roughly 1e6 environment steps before the sparse
  // terminal goal reward outweighs collision postponement; smaller budgets
  // plateau in a retreat policy that never reaches goals.
  cfg.ppo.parallel_envs = 32;
  cfg.ppo.steps_per_env = 24;
  cfg.ppo.minibatch = 192;
  cfg.ppo.iterations = 1000;
  cfg.ppo.lr = 3e-4;
  cfg.collect.image_count = 5000;
  cfg.collect.trajectory_episodes = 400;
  cfg.eval.episodes = 300;
  return cfg;
}

PipelineConfig PipelineConfig::preset_full(uint64_t seed) {
  PipelineConfig cfg;
  cfg.seed = seed;
  cfg.preset = "full";
  cfg.camera.width = 256;
  cfg.camera.height = 128;
  cfg.world.arena_extent = {12.0, 12.0};
  cfg.vae.base_width = 32;
  cfg.vae.beta = 1.0 / (256.0 * 128.0);
  cfg.ppo.parallel_envs = 100;
  cfg.ppo.steps_per_env = 60;
  cfg.ppo.minibatch = 1000;
  cfg.ppo.iterations = 1500;
  cfg.collect.image_count = 50000;
  cfg.collect.trajectory_episodes = 2500;
  cfg.eval.episodes = 1000;
  return cfg;
}

PipelineConfig PipelineConfig::make_preset(const std::string& name, uint64_t seed) {
  if (name == "desk") return preset_desk(seed);
  if (name == "full") return preset_full(seed);
  throw ConfigError("unknown preset '" + name + "'; expected 'desk' or 'full'");
}

PipelineConfig load_config(const std::filesystem::path& path, const std::string& preset,
                           uint64_t seed) {
  PipelineConfig cfg = PipelineConfig::make_preset(preset, seed);
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) {
      throw ConfigError("cannot read config file " + path.string());
    }
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    apply_over(cfg, j);
    // CLI flags win over file contents.
    cfg.seed = seed;
    cfg.preset = preset;
  }
  cfg.validate();
  return cfg;
}

}  // namespace latnav
