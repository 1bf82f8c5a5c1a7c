#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "latnav/config.hpp"
#include "latnav/errors.hpp"
#include "latnav/policy.hpp"
#include "latnav/stages.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDependency = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latnav: learned local navigation from latent depth"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string preset = "desk";
  std::string out = "out";
  uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON overrides applied over the preset");
  app.add_option("--seed", seed, "master seed; wins over the config file");
  app.add_option("--preset", preset, "parameter preset")
      ->check(CLI::IsMember({"desk", "full"}));
  app.add_option("--out", out, "artifact directory");

  std::string wm_variant = "worldmodel";
  std::string policy_variant = "worldmodel";
  std::string eval_variant = "worldmodel";
  bool eval_dynamic = false;
  double density_scale = 1.0;
  bool no_filter = false;

  app.add_subcommand("collect-images", "render the depth-image dataset");
  app.add_subcommand("train-vae", "train the filtered-target depth VAE");
  app.add_subcommand("train-baseline", "train the reactive policy in static worlds");
  app.add_subcommand("collect-trajectories",
                     "roll out the baseline and store latent trajectories");
  app.add_subcommand("train-worldmodel", "train a latent sequence model")
      ->add_option("--variant", wm_variant, "worldmodel|seq2seq")
      ->check(CLI::IsMember({"worldmodel", "seq2seq"}));
  app.add_subcommand("train-policy", "train a navigation policy in dynamic worlds")
      ->add_option("--variant", policy_variant,
                   "reactive|worldmodel|seq2seq|blind|e2e-cnn|e2e-cnn-lstm");
  auto* cmd_eval = app.add_subcommand("evaluate", "run the matched-seed evaluation");
  cmd_eval->add_option("--variant", eval_variant, "policy variant to evaluate");
  cmd_eval->add_flag("--dynamic", eval_dynamic, "evaluate in dynamic worlds");
  cmd_eval->add_option("--density-scale", density_scale,
                       "obstacle density multiplier for the evaluation worlds");
  app.add_subcommand("ablate",
                     "train filter/no-filter twins and compare on held-out shapes")
      ->add_flag("--no-filter", no_filter, "report the unfiltered twin's metrics");
  app.add_subcommand("render", "emit filter strips, dream strips and training curves");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    latnav::StageContext ctx{latnav::load_config(config_path, preset, seed), out};
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "collect-images") {
      stage_collect_images(ctx);
    } else if (cmd == "train-vae") {
      stage_train_vae(ctx);
    } else if (cmd == "train-baseline") {
      stage_train_baseline(ctx);
    } else if (cmd == "collect-trajectories") {
      stage_collect_trajectories(ctx);
    } else if (cmd == "train-worldmodel") {
      stage_train_worldmodel(ctx, wm_variant);
    } else if (cmd == "train-policy") {
      stage_train_policy(ctx, latnav::parse_variant(policy_variant));
    } else if (cmd == "evaluate") {
      const latnav::EvalMetrics m = stage_evaluate(
          ctx, latnav::parse_variant(eval_variant), eval_dynamic, density_scale);
      std::cout << m.to_json().dump(2) << "\n";
    } else if (cmd == "ablate") {
      // Both twins always train so the matched-seed comparison exists; the
      // flag selects which side's headline number to print.
      const nlohmann::json summary = stage_ablate(ctx);
      if (no_filter) {
        std::cout << "failure_rate " << summary.at("raw_failure_rate").get<double>()
                  << " (no filter)\n";
      }
      std::cout << summary.dump(2) << "\n";
    } else if (cmd == "render") {
      stage_render(ctx);
    }
  } catch (const latnav::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const latnav::DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << "\n";
    return kExitDependency;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
