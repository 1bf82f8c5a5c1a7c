#include "latnav/stages.hpp"

#include <chrono>
#include <fstream>
#include <optional>
#include <sstream>

#include "latnav/artifacts.hpp"
#include "latnav/camera.hpp"
#include "latnav/dataset.hpp"
#include "latnav/depth_filter.hpp"
#include "latnav/errors.hpp"
#include "latnav/figures.hpp"
#include "latnav/rng.hpp"
#include "latnav/vae.hpp"
#include "latnav/world_model.hpp"

namespace latnav {

namespace {

constexpr const char* kDataSubdir = "data";

// Deepest stride-2 stack that still divides the resolution (at most 4).
int vae_stage_count(int width, int height) {
  for (int s = 4; s > 1; --s) {
    const int div = 1 << s;
    if (width % div == 0 && height % div == 0 && width / div >= 1 && height / div >= 1) {
      return s;
    }
  }
  return 1;
}

ConvVae::Config vae_config_for(const PipelineConfig& cfg) {
  ConvVae::Config vc;
  vc.width = cfg.camera.width;
  vc.height = cfg.camera.height;
  vc.latent_dim = cfg.vae.latent_dim;
  vc.base_width = cfg.vae.base_width;
  vc.stages = vae_stage_count(cfg.camera.width, cfg.camera.height);
  vc.max_range = cfg.camera.max_range;
  return vc;
}

nlohmann::json manifest_ref(const std::filesystem::path& dir) {
  return hash_hex(file_fnv1a(dir / "manifest.json"));
}

WorldState world_with_retries(WorldConfig wc, uint64_t seed) {
  for (int attempt = 0; attempt < 32; ++attempt) {
    wc.seed = attempt == 0 ? seed : derive_seed(seed, 0x77720000ULL + attempt);
    try {
      return generate_world(wc);
    } catch (const SamplingError&) {
      continue;
    }
  }
  throw SamplingError("collect-images: world generation kept failing");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string policy_dir_name(PolicyVariant v) { return "policy_" + variant_name(v); }

std::string eval_dir_name(PolicyVariant v, bool dynamic) {
  return "eval_" + variant_name(v) + (dynamic ? "_dynamic" : "_static");
}

// ---------------------------------------------------------------------------
// collect-images

std::filesystem::path stage_collect_images(const StageContext& ctx) {
  const PipelineConfig& cfg = ctx.cfg;
  const auto dir = ctx.dir(kImagesDir);
  std::filesystem::create_directories(dir / kDataSubdir);
  RunLock lock(dir);

  ImageDatasetWriter writer(dir / kDataSubdir, cfg.camera.width, cfg.camera.height,
                            cfg.seed, cfg.hash(), {{"stage", "collect-images"}});
  constexpr int kImagesPerWorld = 10;
  std::optional<WorldState> world;
  int world_index = -1;
  for (int i = 0; i < cfg.collect.image_count; ++i) {
    if (i / kImagesPerWorld != world_index) {
      world_index = i / kImagesPerWorld;
      WorldConfig wc = cfg.world;
      wc.dynamic_fraction = 0.0;
      world = world_with_retries(
          wc, derive_seed(cfg.seed, 0x696d670000000000ULL + world_index));
    }
    // Camera spawn: a collision-free pose with a small footprint; the goal
    // half of the sample is ignored.
    Rng rng(derive_seed(cfg.seed, 0x706f730000000000ULL + static_cast<uint64_t>(i)));
    Pose2 pose;
    for (int attempt = 0;; ++attempt) {
      try {
        pose = sample_start_goal(*world, {0.15, 0.15}, 0.0, 0.0, rng).first;
        break;
      } catch (const SamplingError&) {
        if (attempt >= 4) throw;
      }
    }
    const CameraMount mount = randomize_camera(cfg.mount, rng);
    ImageRecord rec;
    rec.clean = render_depth_from(*world, pose, mount, cfg.camera);
    rec.degraded = degrade(rec.clean, cfg.degrade, cfg.camera, rng);
    rec.target = filter_target(rec.clean, cfg.filter);
    writer.append(rec);
  }
  writer.finalize();

  nlohmann::json outputs = {
      {"count", cfg.collect.image_count},
      {"records", hash_hex(file_fnv1a(dir / kDataSubdir / "records.bin"))},
  };
  write_stage_manifest(dir, make_stage_manifest("collect-images", cfg.hash(), cfg.seed,
                                                cfg.preset, {}, outputs));
  return dir;
}

// ---------------------------------------------------------------------------
// train-vae

std::filesystem::path stage_train_vae(const StageContext& ctx, const std::string& dir_name,
                                      const std::string& images_dir) {
  const PipelineConfig& cfg = ctx.cfg;
  const auto dir = ctx.dir(dir_name);
  std::filesystem::create_directories(dir);
  RunLock lock(dir);

  require_stage(ctx.dir(images_dir), "collect-images");
  ImageDataset data = ImageDataset::open(ctx.dir(images_dir) / kDataSubdir);

  ConvVae vae(vae_config_for(cfg), derive_seed(cfg.seed, 0x76616569));
  const VaeTrainMetrics metrics =
      train_vae(vae, data, cfg.vae, derive_seed(cfg.seed, 0x76616574));
  const auto ckpt = dir / "vae.ckpt";
  vae.save(ckpt);

  std::vector<CurveSeries> curves = {{"loss", metrics.epoch_loss},
                                     {"recon", metrics.epoch_recon},
                                     {"kl", metrics.epoch_kl}};
  write_ppm(dir / "loss_curve.ppm", render_curves(curves, 480, 240));
  write_curves_csv(dir / "loss_curve.csv", curves);

  nlohmann::json outputs = {
      {"checkpoint", hash_hex(file_fnv1a(ckpt))},
      {"epochs", cfg.vae.epochs},
      {"raw_targets", cfg.vae.raw_targets},
      {"final_loss", metrics.epoch_loss.back()},
      {"final_recon", metrics.epoch_recon.back()},
  };
  write_stage_manifest(
      dir, make_stage_manifest("train-vae", cfg.hash(), cfg.seed, cfg.preset,
                               {{"images", manifest_ref(ctx.dir(images_dir))}}, outputs));
  return dir;
}

// ---------------------------------------------------------------------------
// policy training (baseline and final variants share the loop)

namespace {

struct LoadedStack {
  std::optional<ConvVae> vae;
  std::optional<WorldModel> wm;
  std::optional<Seq2SeqModel> s2s;
  FilterConfig filter;

  ReprStack stack() const {
    ReprStack s;
    if (vae) s.vae = &*vae;
    if (wm) s.wm = &*wm;
    if (s2s) s.s2s = &*s2s;
    s.filter = &filter;
    return s;
  }
};

// Loads the frozen upstream models a variant trains over; `vae_dir` lets the
// ablation twins point at their own encoder.
LoadedStack load_stack(const StageContext& ctx, PolicyVariant variant,
                       const std::string& vae_dir, nlohmann::json* inputs) {
  LoadedStack ls;
  ls.filter = ctx.cfg.filter;
  const bool needs_vae = variant == PolicyVariant::kReactive ||
                         variant == PolicyVariant::kWorldModel ||
                         variant == PolicyVariant::kSeq2Seq;
  if (needs_vae) {
    require_stage(ctx.dir(vae_dir), "train-vae");
    ls.vae.emplace(ConvVae::load(ctx.dir(vae_dir) / "vae.ckpt"));
    (*inputs)["vae"] = manifest_ref(ctx.dir(vae_dir));
  }
  if (variant == PolicyVariant::kWorldModel) {
    require_stage(ctx.dir(kWorldModelDir), "train-worldmodel");
    ls.wm.emplace(WorldModel::load(ctx.dir(kWorldModelDir) / "worldmodel.ckpt"));
    (*inputs)["worldmodel"] = manifest_ref(ctx.dir(kWorldModelDir));
  }
  if (variant == PolicyVariant::kSeq2Seq) {
    require_stage(ctx.dir(kSeq2SeqDir), "train-worldmodel");
    ls.s2s.emplace(Seq2SeqModel::load(ctx.dir(kSeq2SeqDir) / "seq2seq.ckpt"));
    (*inputs)["seq2seq"] = manifest_ref(ctx.dir(kSeq2SeqDir));
  }
  return ls;
}

PolicyNet::Config policy_config_for(const PipelineConfig& cfg, PolicyVariant variant,
                                    int repr_dim) {
  PolicyNet::Config pc;
  pc.variant = variant;
  pc.repr_dim = repr_dim;
  pc.hidden_dim = cfg.ppo.hidden_dim;
  if (variant_uses_images(variant)) {
    pc.image_width = cfg.camera.width;
    pc.image_height = cfg.camera.height;
  }
  return pc;
}

std::filesystem::path train_policy_impl(const StageContext& ctx, PolicyVariant variant,
                                        bool dynamic, const std::string& dir_name,
                                        const std::string& stage_name,
                                        const std::string& vae_dir) {
  const PipelineConfig& cfg = ctx.cfg;
  const auto dir = ctx.dir(dir_name);
  std::filesystem::create_directories(dir);
  RunLock lock(dir);

  nlohmann::json inputs = nlohmann::json::object();
  const LoadedStack ls = load_stack(ctx, variant, vae_dir, &inputs);
  const ReprStack stack = ls.stack();
  stack.require(variant);

  const uint64_t tag = static_cast<uint64_t>(variant) | (dynamic ? 0x100u : 0u);
  PolicyNet policy(policy_config_for(cfg, variant, repr_dim_for(variant, stack)),
                   derive_seed(cfg.seed, 0x70690000ULL + tag));
  const uint64_t run_seed = derive_seed(cfg.seed, 0x726c0000ULL + tag);
  RolloutCollector collector(variant, stack, cfg, dynamic, run_seed);

  std::ofstream metrics_out(dir / "metrics.jsonl", std::ios::trunc);
  std::vector<double> fail_series, reward_series, traveled_series;
  const auto t0 = std::chrono::steady_clock::now();
  for (int it = 0; it < cfg.ppo.iterations; ++it) {
    const RolloutBuffer buf = collector.collect(policy, it);
    const PpoStats stats =
        ppo_update(policy, buf, cfg.ppo, derive_seed(run_seed, 0x75700000ULL + it));
    const EvalMetrics window = collector.window_metrics();
    fail_series.push_back(window.failure_rate);
    reward_series.push_back(window.mean_reward);
    traveled_series.push_back(window.traveled_distance);
    nlohmann::json line = {
        {"iteration", it},
        {"failure_rate", window.failure_rate},
        {"traveled_distance", window.traveled_distance},
        {"mean_reward", window.mean_reward},
        {"wall_clock", seconds_since(t0)},
        {"policy_loss", stats.policy_loss},
        {"value_loss", stats.value_loss},
        {"entropy", stats.entropy},
        {"clip_fraction", stats.clip_fraction},
    };
    metrics_out << line.dump() << "\n";
  }
  metrics_out.flush();

  const auto ckpt = dir / "policy.ckpt";
  policy.save(ckpt);
  std::vector<CurveSeries> curves = {{"failure_rate", fail_series}};
  write_ppm(dir / "failure_curve.ppm", render_curves(curves, 480, 240));
  curves.push_back({"mean_reward", reward_series});
  curves.push_back({"traveled_distance", traveled_series});
  write_curves_csv(dir / "training_curve.csv", curves);

  const EvalMetrics window = collector.window_metrics();
  nlohmann::json outputs = {
      {"checkpoint", hash_hex(file_fnv1a(ckpt))},
      {"variant", variant_name(variant)},
      {"dynamic_worlds", dynamic},
      {"iterations", cfg.ppo.iterations},
      {"window_failure_rate", window.failure_rate},
      {"window_mean_reward", window.mean_reward},
  };
  write_stage_manifest(dir, make_stage_manifest(stage_name, cfg.hash(), cfg.seed,
                                                cfg.preset, inputs, outputs));
  return dir;
}

}  // namespace

std::filesystem::path stage_train_baseline(const StageContext& ctx) {
  return train_policy_impl(ctx, PolicyVariant::kReactive, /*dynamic=*/false,
                           kBaselineDir, "train-baseline", kVaeDir);
}

std::filesystem::path stage_train_policy(const StageContext& ctx, PolicyVariant variant) {
  return train_policy_impl(ctx, variant, /*dynamic=*/true, policy_dir_name(variant),
                           "train-policy", kVaeDir);
}

// ---------------------------------------------------------------------------
// collect-trajectories

std::filesystem::path stage_collect_trajectories(const StageContext& ctx) {
  const PipelineConfig& cfg = ctx.cfg;
  const auto dir = ctx.dir(kTrajectoriesDir);
  std::filesystem::create_directories(dir / kDataSubdir);
  RunLock lock(dir);

  require_stage(ctx.dir(kVaeDir), "train-vae");
  require_stage(ctx.dir(kBaselineDir), "train-baseline");
  ConvVae vae = ConvVae::load(ctx.dir(kVaeDir) / "vae.ckpt");
  PolicyNet baseline = PolicyNet::load(ctx.dir(kBaselineDir) / "policy.ckpt");

  const CollectStats stats = collect_trajectories(
      baseline, vae, cfg, dir / kDataSubdir, {{"stage", "collect-trajectories"}});

  nlohmann::json inputs = {{"vae", manifest_ref(ctx.dir(kVaeDir))},
                           {"baseline", manifest_ref(ctx.dir(kBaselineDir))}};
  nlohmann::json outputs = {
      {"episodes", stats.episodes},
      {"kept", stats.kept},
      {"failure_rate", stats.failure_rate},
      {"mean_length", stats.mean_length},
      {"records", hash_hex(file_fnv1a(dir / kDataSubdir / "records.bin"))},
  };
  write_stage_manifest(dir, make_stage_manifest("collect-trajectories", cfg.hash(),
                                                cfg.seed, cfg.preset, inputs, outputs));
  return dir;
}

// ---------------------------------------------------------------------------
// train-worldmodel

std::filesystem::path stage_train_worldmodel(const StageContext& ctx,
                                             const std::string& variant) {
  const PipelineConfig& cfg = ctx.cfg;
  if (variant != "worldmodel" && variant != "seq2seq") {
    throw ConfigError("unknown world-model variant '" + variant +
                      "'; expected worldmodel or seq2seq");
  }
  const bool seq = variant == "seq2seq";
  const auto dir = ctx.dir(seq ? kSeq2SeqDir : kWorldModelDir);
  std::filesystem::create_directories(dir);
  RunLock lock(dir);

  require_stage(ctx.dir(kVaeDir), "train-vae");
  require_stage(ctx.dir(kTrajectoriesDir), "collect-trajectories");
  TrajectoryDataset data = TrajectoryDataset::open(ctx.dir(kTrajectoriesDir) / kDataSubdir);

  WmTrainMetrics metrics;
  std::filesystem::path ckpt;
  if (seq) {
    Seq2SeqModel::Config mc;
    mc.latent_dim = data.latent_dim();
    mc.hidden_dim = cfg.wm.hidden_dim;
    mc.layers = cfg.wm.layers;
    Seq2SeqModel model(mc, derive_seed(cfg.seed, 0x73327369));
    metrics = train_seq2seq(model, data, cfg.wm, derive_seed(cfg.seed, 0x73327374));
    ckpt = dir / "seq2seq.ckpt";
    model.save(ckpt);
  } else {
    WorldModel::Config mc;
    mc.latent_dim = data.latent_dim();
    mc.hidden_dim = cfg.wm.hidden_dim;
    mc.layers = cfg.wm.layers;
    WorldModel model(mc, derive_seed(cfg.seed, 0x776d6969));
    metrics = train_world_model(model, data, cfg.wm, derive_seed(cfg.seed, 0x776d7474));
    ckpt = dir / "worldmodel.ckpt";
    model.save(ckpt);
  }

  std::vector<CurveSeries> curves = {{"loss", metrics.epoch_loss},
                                     {"nll", metrics.epoch_nll},
                                     {"val_nll", metrics.val_nll}};
  write_ppm(dir / "loss_curve.ppm", render_curves(curves, 480, 240));
  write_curves_csv(dir / "loss_curve.csv", curves);

  nlohmann::json inputs = {{"vae", manifest_ref(ctx.dir(kVaeDir))},
                           {"trajectories", manifest_ref(ctx.dir(kTrajectoriesDir))}};
  nlohmann::json outputs = {
      {"checkpoint", hash_hex(file_fnv1a(ckpt))},
      {"variant", variant},
      {"final_loss", metrics.epoch_loss.back()},
      {"final_val_nll", metrics.val_nll.back()},
  };
  write_stage_manifest(dir, make_stage_manifest("train-worldmodel", cfg.hash(), cfg.seed,
                                                cfg.preset, inputs, outputs));
  return dir;
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

// The reactive comparison point is the baseline unless a dynamically trained
// reactive policy exists.
std::filesystem::path resolve_policy_dir(const StageContext& ctx, PolicyVariant variant,
                                         std::string* stage_name) {
  if (variant == PolicyVariant::kReactive) {
    const auto trained = ctx.dir(policy_dir_name(variant));
    if (std::filesystem::exists(trained / "manifest.json")) {
      *stage_name = "train-policy";
      return trained;
    }
    *stage_name = "train-baseline";
    return ctx.dir(kBaselineDir);
  }
  *stage_name = "train-policy";
  return ctx.dir(policy_dir_name(variant));
}

}  // namespace

EvalMetrics stage_evaluate(const StageContext& ctx, PolicyVariant variant, bool dynamic,
                           double density_scale) {
  const PipelineConfig& cfg = ctx.cfg;
  std::string dir_name = eval_dir_name(variant, dynamic);
  if (density_scale != 1.0) {
    dir_name += "_d" + std::to_string(static_cast<int>(density_scale * 100.0 + 0.5));
  }
  const auto dir = ctx.dir(dir_name);
  std::filesystem::create_directories(dir);
  RunLock lock(dir);

  nlohmann::json inputs = nlohmann::json::object();
  const LoadedStack ls = load_stack(ctx, variant, kVaeDir, &inputs);
  std::string policy_stage;
  const auto policy_dir = resolve_policy_dir(ctx, variant, &policy_stage);
  require_stage(policy_dir, policy_stage);
  inputs["policy"] = manifest_ref(policy_dir);
  PolicyNet policy = PolicyNet::load(policy_dir / "policy.ckpt");
  if (policy.config().variant != variant) {
    throw DependencyError("checkpoint in " + policy_dir.string() + " holds variant '" +
                          variant_name(policy.config().variant) + "', expected '" +
                          variant_name(variant) + "'");
  }

  const EvalMetrics metrics =
      evaluate_policy(policy, ls.stack(), cfg, dynamic,
                      derive_seed(cfg.seed, 0x6576616c), density_scale);
  atomic_write(dir / "metrics.json", metrics.to_json().dump(2) + "\n");

  nlohmann::json outputs = {
      {"variant", variant_name(variant)},
      {"dynamic", dynamic},
      {"density_scale", density_scale},
      {"episodes", static_cast<int>(metrics.episodes.size())},
      {"failure_rate", metrics.failure_rate},
      {"traveled_distance", metrics.traveled_distance},
      {"mean_reward", metrics.mean_reward},
      {"records", hash_hex(file_fnv1a(dir / "metrics.json"))},
  };
  write_stage_manifest(dir, make_stage_manifest("evaluate", cfg.hash(), cfg.seed,
                                                cfg.preset, inputs, outputs));
  return metrics;
}

// ---------------------------------------------------------------------------
// ablate

nlohmann::json stage_ablate(const StageContext& ctx) {
  const auto dir = ctx.dir(kAblateDir);
  std::filesystem::create_directories(dir);
  RunLock lock(dir);

  // Twins train on box/cylinder clutter only; the held-out shapes appear at
  // evaluation time.
  StageContext train_ctx{ctx.cfg, dir};
  train_ctx.cfg.world.object_categories = {ObstacleCategory::kBox,
                                           ObstacleCategory::kCylinder};
  stage_collect_images(train_ctx);
  stage_train_vae(train_ctx);  // filtered twin at ablate/vae

  StageContext raw_ctx = train_ctx;
  raw_ctx.cfg.vae.raw_targets = true;
  stage_train_vae(raw_ctx, "vae_raw");

  train_policy_impl(train_ctx, PolicyVariant::kReactive, /*dynamic=*/false,
                    "policy_filtered", "train-baseline", kVaeDir);
  train_policy_impl(raw_ctx, PolicyVariant::kReactive, /*dynamic=*/false,
                    "policy_raw", "train-baseline", "vae_raw");

  // Matched-seed static evaluation on the held-out shapes.
  StageContext eval_ctx{ctx.cfg, dir};
  eval_ctx.cfg.world.object_categories = {ObstacleCategory::kPanel,
                                          ObstacleCategory::kSlab};
  const uint64_t eval_seed = derive_seed(ctx.cfg.seed, 0x61626c65);
  auto eval_twin = [&](const std::string& vae_dir, const std::string& policy_dir) {
    ConvVae vae = ConvVae::load(dir / vae_dir / "vae.ckpt");
    PolicyNet policy = PolicyNet::load(dir / policy_dir / "policy.ckpt");
    ReprStack stack;
    stack.vae = &vae;
    return evaluate_policy(policy, stack, eval_ctx.cfg, /*dynamic=*/false, eval_seed);
  };
  const EvalMetrics filtered = eval_twin(kVaeDir, "policy_filtered");
  const EvalMetrics raw = eval_twin("vae_raw", "policy_raw");
  atomic_write(dir / "eval_filtered.json", filtered.to_json().dump(2) + "\n");
  atomic_write(dir / "eval_raw.json", raw.to_json().dump(2) + "\n");

  nlohmann::json summary = {
      {"filtered_failure_rate", filtered.failure_rate},
      {"raw_failure_rate", raw.failure_rate},
      {"gap", raw.failure_rate - filtered.failure_rate},
      {"episodes", static_cast<int>(filtered.episodes.size())},
  };
  atomic_write(dir / "summary.json", summary.dump(2) + "\n");

  nlohmann::json inputs = {{"vae", manifest_ref(dir / kVaeDir)},
                           {"vae_raw", manifest_ref(dir / "vae_raw")},
                           {"policy_filtered", manifest_ref(dir / "policy_filtered")},
                           {"policy_raw", manifest_ref(dir / "policy_raw")}};
  write_stage_manifest(dir, make_stage_manifest("ablate", ctx.cfg.hash(), ctx.cfg.seed,
                                                ctx.cfg.preset, inputs, summary));
  return summary;
}

// ---------------------------------------------------------------------------
// render

namespace {

RgbImage depth_tile(const DepthImage& img, double max_range) {
  return depth_to_rgb(img, max_range);
}

void render_filter_strip(const StageContext& ctx, const ConvVae& vae,
                         const std::filesystem::path& out) {
  const PipelineConfig& cfg = ctx.cfg;
  ImageDataset data = ImageDataset::open(ctx.dir(kImagesDir) / kDataSubdir);
  const size_t samples = std::min<size_t>(6, data.size());
  std::vector<RgbImage> columns;
  for (size_t k = 0; k < samples; ++k) {
    const size_t idx = k * (data.size() / samples);
    const ImageRecord rec = data.get(idx);
    const DepthImage s1 = filter_stage1(rec.degraded, cfg.filter);
    const DepthImage s2 = filter_stage2(s1, cfg.filter);
    const DepthImage s3 = filter_stage3(s2, cfg.filter);
    const DepthImage recon = vae.decode(vae.encode(rec.degraded).mu);
    columns.push_back(vstack({depth_tile(rec.clean, cfg.camera.max_range),
                              depth_tile(rec.degraded, cfg.camera.max_range),
                              depth_tile(s1, cfg.camera.max_range),
                              depth_tile(s2, cfg.camera.max_range),
                              depth_tile(s3, cfg.camera.max_range),
                              depth_tile(recon, cfg.camera.max_range)}));
  }
  write_ppm(out, upscale(hstack(columns), 3));
}

bool render_dream_strip(const StageContext& ctx, const ConvVae& vae,
                        const std::filesystem::path& img_out,
                        const std::filesystem::path& curve_out,
                        const std::filesystem::path& csv_out) {
  if (!std::filesystem::exists(ctx.dir(kWorldModelDir) / "manifest.json") ||
      !std::filesystem::exists(ctx.dir(kTrajectoriesDir) / "manifest.json")) {
    return false;
  }
  WorldModel wm = WorldModel::load(ctx.dir(kWorldModelDir) / "worldmodel.ckpt");
  TrajectoryDataset data = TrajectoryDataset::open(ctx.dir(kTrajectoriesDir) / kDataSubdir);
  constexpr int kWarm = 5;
  constexpr int kDream = 10;
  const Trajectory* pick = nullptr;
  for (size_t i = data.size(); i-- > 0;) {
    if (static_cast<int>(data.get(i).steps.size()) >= kWarm + kDream) {
      pick = &data.get(i);
      break;
    }
  }
  if (pick == nullptr) return false;

  const LatentSequence seq = to_latent_sequence(*pick);
  Belief belief = wm.initial_belief();
  for (int t = 0; t < kWarm; ++t) {
    belief = wm.measurement_update(belief, seq.latents[static_cast<size_t>(t)],
                                   seq.deltas[static_cast<size_t>(t)])
                 .first;
  }
  std::vector<RgbImage> truth_row, dream_row;
  std::vector<double> sigma_series;
  for (int k = 0; k < kDream; ++k) {
    const size_t t = static_cast<size_t>(kWarm + k);
    auto [next, pred] = wm.dream_update(belief, seq.deltas[t]);
    belief = std::move(next);
    double sigma_mean = 0.0;
    for (double s : pred.sigma) sigma_mean += s;
    sigma_series.push_back(sigma_mean / static_cast<double>(pred.sigma.size()));
    truth_row.push_back(depth_tile(vae.decode(seq.latents[t]), ctx.cfg.camera.max_range));
    dream_row.push_back(depth_tile(vae.decode(pred.mu), ctx.cfg.camera.max_range));
  }
  write_ppm(img_out, upscale(vstack({hstack(truth_row), hstack(dream_row)}), 3));
  std::vector<CurveSeries> curves = {{"mean_sigma", sigma_series}};
  write_ppm(curve_out, render_curves(curves, 480, 240));
  write_curves_csv(csv_out, curves);
  return true;
}

int render_training_curves(const StageContext& ctx, const std::filesystem::path& img_out,
                           const std::filesystem::path& csv_out) {
  std::vector<CurveSeries> curves;
  std::vector<std::pair<std::string, std::filesystem::path>> sources = {
      {"baseline", ctx.dir(kBaselineDir)}};
  for (PolicyVariant v :
       {PolicyVariant::kReactive, PolicyVariant::kWorldModel, PolicyVariant::kSeq2Seq,
        PolicyVariant::kBlind, PolicyVariant::kE2eCnn, PolicyVariant::kE2eCnnLstm}) {
    sources.emplace_back(variant_name(v), ctx.dir(policy_dir_name(v)));
  }
  for (const auto& [label, dir] : sources) {
    std::ifstream in(dir / "metrics.jsonl");
    if (!in) continue;
    CurveSeries series{label, {}};
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      series.values.push_back(nlohmann::json::parse(line).at("failure_rate").get<double>());
    }
    if (!series.values.empty()) curves.push_back(std::move(series));
  }
  if (curves.empty()) return 0;
  write_ppm(img_out, render_curves(curves, 640, 320));
  write_curves_csv(csv_out, curves);
  return static_cast<int>(curves.size());
}

}  // namespace

std::filesystem::path stage_render(const StageContext& ctx) {
  const PipelineConfig& cfg = ctx.cfg;
  const auto dir = ctx.dir(kRenderDir);
  std::filesystem::create_directories(dir);
  RunLock lock(dir);

  require_stage(ctx.dir(kImagesDir), "collect-images");
  require_stage(ctx.dir(kVaeDir), "train-vae");
  ConvVae vae = ConvVae::load(ctx.dir(kVaeDir) / "vae.ckpt");

  render_filter_strip(ctx, vae, dir / "filter_strip.ppm");
  const bool dreamed = render_dream_strip(ctx, vae, dir / "dream_strip.ppm",
                                          dir / "dream_sigma.ppm", dir / "dream_sigma.csv");
  const int curve_count =
      render_training_curves(ctx, dir / "training_curves.ppm", dir / "training_curves.csv");

  nlohmann::json outputs = {
      {"filter_strip", hash_hex(file_fnv1a(dir / "filter_strip.ppm"))},
      {"dream_strip", dreamed},
      {"training_curves", curve_count},
  };
  write_stage_manifest(dir, make_stage_manifest("render", cfg.hash(), cfg.seed,
                                                cfg.preset,
                                                {{"images", manifest_ref(ctx.dir(kImagesDir))},
                                                 {"vae", manifest_ref(ctx.dir(kVaeDir))}},
                                                outputs));
  return dir;
}

}  // namespace latnav
