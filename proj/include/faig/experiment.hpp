#pragma once

#include <map>
#include <string>
#include <vector>

#include "faig/eval.hpp"
#include "faig/model.hpp"
#include "faig/train.hpp"

namespace faig {

// Declarative experiment description, loaded from a line-based key=value file
// with [section] headers. CLI --override KEY=VALUE entries win over the file.
struct ExperimentConfig {
  ModelSpec model{.arch = "srresnet_nobn", .channels = 32, .num_blocks = 6, .scale = 2};

  // Data synthesis (procedural unless a manifest is given).
  std::string data_manifest;  // empty -> procedural
  int train_images = 32;
  int train_image_size = 96;
  int eval_image_size = 96;
  uint64_t data_seed = 7;

  // Degradation parameters shared by training policies and eval synthesis.
  double blur_sigma = 2.0;
  int blur_kernel_size = 21;
  double noise_sigma = 0.1;

  TrainConfig baseline;
  TrainConfig finetune;
  TrainConfig retrain;

  int attrib_n_steps = 100;
  double select_fraction = 0.01;
  int attrib_images = 16;            // dataset X of Eq. 7-style averaging
  std::vector<double> mask_fractions = {0.01, 0.05};
  std::vector<double> sweep_fractions = {0.001, 0.003, 0.01, 0.03, 0.05, 0.1, 0.3, 0.5, 1.0};

  int mask_eval_images = 8;
  int calib_images = 40;
  int test_images = 100;
  bool calibrate = true;
  Thresholds thresholds;  // used when calibrate == false

  std::vector<uint64_t> seeds = {0, 1, 2};
  std::string out_dir = "out";

  ExperimentConfig();
};

ExperimentConfig load_config(const std::string& path);
void apply_override(ExperimentConfig& cfg, const std::string& key_eq_value);
// Canonical serialization; the digest ties artifacts to the producing config.
std::string serialize_config(const ExperimentConfig& cfg);
std::string config_digest(const ExperimentConfig& cfg);

// ---- pipeline stages ----
//
// Artifacts live under <out_dir>/seed<N>/. Downstream stages validate the
// config digest stored in upstream checkpoints and fail with the producing
// command's name if an artifact is missing or from a different config.

struct SeedPaths {
  std::string dir;
  std::string baseline_ckpt;
  std::string target_ckpt;
  std::string train_log;
  std::string finetune_log;
  std::string scores_prefix;  // scores_<method>_<degradation>.bin
  std::string mask_report;
  std::string sweep_report;
  std::string retrain_report;
  std::string distribution_prefix;
};

SeedPaths seed_paths(const ExperimentConfig& cfg, uint64_t seed);

Dataset make_train_dataset(const ExperimentConfig& cfg);
Dataset make_attrib_dataset(const ExperimentConfig& cfg);
std::vector<ValSplit> make_val_splits(const ExperimentConfig& cfg);
// Degraded eval samples per input split {"clean","blurry","noisy"}.
std::map<std::string, std::vector<PairedSample>> make_eval_sets(const ExperimentConfig& cfg,
                                                                int count, uint64_t stream);
// Labeled mixed-degradation samples for prediction (blur/noise each p=0.5).
std::vector<LabeledSample> make_labeled_set(const ExperimentConfig& cfg, int count,
                                            uint64_t stream);

void run_prepare_data(const ExperimentConfig& cfg);
void run_train_baseline(const ExperimentConfig& cfg, uint64_t seed);
void run_finetune_target(const ExperimentConfig& cfg, uint64_t seed);
// Writes score tables + FilterSet CSVs for faig/ig/absdelta on blur and noise,
// plus the no-subtraction ablation variant of faig.
void run_attribute(const ExperimentConfig& cfg, uint64_t seed);
void run_mask_eval(const ExperimentConfig& cfg, uint64_t seed);
void run_sweep(const ExperimentConfig& cfg, uint64_t seed);
void run_retrain_eval(const ExperimentConfig& cfg, uint64_t seed);
// Calibrates thresholds on a disjoint split (unless cfg.calibrate == false)
// and writes the prediction report. Uses the given seed's model pair.
PredictionReport run_predict(const ExperimentConfig& cfg, uint64_t seed);
void run_plot(const ExperimentConfig& cfg, uint64_t seed);
// Full desk-scale sequence over all seeds + cross-seed summary CSV.
void run_reproduce_all(const ExperimentConfig& cfg);

// Loads a checkpoint, failing with an actionable message naming the producing
// command if absent, and rejecting wrong-config artifacts.
ModelParams load_stage_checkpoint(const ExperimentConfig& cfg, const std::string& path,
                                  const std::string& producing_command);

}  // namespace faig
