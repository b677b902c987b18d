#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "faig/conv_kernels.hpp"
#include "faig/experiment.hpp"

using namespace faig;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  long long seed = -1;  // -1 -> run all configured seeds
  std::string device = "cpu";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file")->required();
  cmd->add_option("--override", args.overrides, "KEY=VALUE config override (repeatable)");
  cmd->add_option("--seed", args.seed, "run only this seed");
  cmd->add_option("--device", args.device, "cpu | cpu-serial")
      ->check(CLI::IsMember({"cpu", "cpu-serial"}));
}

ExperimentConfig resolve(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args.config_path);
  for (const auto& o : args.overrides) apply_override(cfg, o);
  kernels::use_fast() = (args.device != "cpu-serial");
  return cfg;
}

std::vector<uint64_t> seeds_to_run(const ExperimentConfig& cfg, const CommonArgs& args) {
  if (args.seed < 0) return cfg.seeds;
  return {uint64_t(args.seed)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blind-SR degradation attribution toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string stage;
  for (const char* name :
       {"prepare-data", "train-baseline", "finetune-target", "attribute", "mask-eval", "sweep",
        "retrain-eval", "predict", "plot", "reproduce-all"}) {
    CLI::App* cmd = app.add_subcommand(name);
    add_common(cmd, args);
    cmd->callback([&stage, name] { stage = name; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = resolve(args);
    if (stage == "prepare-data") {
      run_prepare_data(cfg);
    } else if (stage == "reproduce-all") {
      run_reproduce_all(cfg);
    } else if (stage == "predict") {
      const uint64_t seed = args.seed < 0 ? cfg.seeds.front() : uint64_t(args.seed);
      const PredictionReport r = run_predict(cfg, seed);
      std::printf("accuracy blur=%.4f noise=%.4f\n", r.accuracy_blur, r.accuracy_noise);
    } else {
      for (uint64_t seed : seeds_to_run(cfg, args)) {
        if (stage == "train-baseline") run_train_baseline(cfg, seed);
        else if (stage == "finetune-target") run_finetune_target(cfg, seed);
        else if (stage == "attribute") run_attribute(cfg, seed);
        else if (stage == "mask-eval") run_mask_eval(cfg, seed);
        else if (stage == "sweep") run_sweep(cfg, seed);
        else if (stage == "retrain-eval") run_retrain_eval(cfg, seed);
        else if (stage == "plot") run_plot(cfg, seed);
        std::printf("%s: seed %llu done\n", stage.c_str(), (unsigned long long)seed);
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
