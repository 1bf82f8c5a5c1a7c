#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "latnav/config.hpp"
#include "latnav/policy.hpp"
#include "latnav/rollout.hpp"

namespace latnav {

// One artifact tree owned by a pipeline run; stage outputs live in fixed
// subdirectories so downstream stages can resolve their dependencies.
struct StageContext {
  PipelineConfig cfg;
  std::filesystem::path out;

  std::filesystem::path dir(const std::string& name) const { return out / name; }
};

// Canonical stage directory names.
inline constexpr const char* kImagesDir = "images";
inline constexpr const char* kVaeDir = "vae";
inline constexpr const char* kBaselineDir = "baseline";
inline constexpr const char* kTrajectoriesDir = "trajectories";
inline constexpr const char* kWorldModelDir = "worldmodel";
inline constexpr const char* kSeq2SeqDir = "seq2seq";
inline constexpr const char* kAblateDir = "ablate";
inline constexpr const char* kRenderDir = "render";

std::string policy_dir_name(PolicyVariant v);  // "policy_<variant>"
std::string eval_dir_name(PolicyVariant v, bool dynamic);

// Each stage acquires the run lock on its directory, checks its upstream
// manifests (DependencyError names the missing stage), writes its artifacts
// and finishes with a stage manifest chaining the upstream hashes. All
// manifests are bit-identical across reruns; wall-clock only ever appears in
// metrics lines.

// Renders (clean, degraded, filtered-target) triples from random camera
// poses in random static worlds.
std::filesystem::path stage_collect_images(const StageContext& ctx);

// Trains the encoder on the image container; the twin with raw targets (no
// filtering) is driven through cfg.vae.raw_targets into its own directory.
std::filesystem::path stage_train_vae(const StageContext& ctx,
                                      const std::string& dir_name = kVaeDir,
                                      const std::string& images_dir = kImagesDir);

// Reactive policy trained in static worlds; the collection driver for
// trajectories and the reactive comparison point.
std::filesystem::path stage_train_baseline(const StageContext& ctx);

// Baseline rollouts in dynamic worlds through the frozen encoder.
std::filesystem::path stage_collect_trajectories(const StageContext& ctx);

// variant is "worldmodel" or "seq2seq".
std::filesystem::path stage_train_worldmodel(const StageContext& ctx,
                                             const std::string& variant);

// Final policies in dynamic worlds over the frozen representation stack.
std::filesystem::path stage_train_policy(const StageContext& ctx, PolicyVariant variant);

// Evaluates a trained policy on matched seeds; the reactive variant resolves
// to the baseline checkpoint. density_scale thins the object density.
EvalMetrics stage_evaluate(const StageContext& ctx, PolicyVariant variant, bool dynamic,
                           double density_scale = 1.0);

// Filter ablation: twin encoders (filtered vs raw targets) trained on
// box/cylinder worlds, twin reactive policies, both evaluated on worlds of
// held-out panel/slab shapes with matched seeds. Returns the summary with
// both failure rates.
nlohmann::json stage_ablate(const StageContext& ctx);

// Figure emission: filter strips, dream strips with per-frame sigma, and
// training curves from whichever stages exist.
std::filesystem::path stage_render(const StageContext& ctx);

}  // namespace latnav
