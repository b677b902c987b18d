#pragma once

#include <functional>
#include <optional>
#include <string>

#include "faig/degrade.hpp"
#include "faig/model.hpp"

namespace faig {

struct TrainConfig {
  int iterations = 20000;
  int batch_size = 16;
  int patch_size = 128;         // ground-truth crop side
  double lr = 2e-4;
  double lr_final = 1e-6;       // cosine decay target; ignored for "fixed"
  std::string schedule = "cosine";  // "cosine" | "fixed"
  Policy policy = Policy::kBicubicOnly;
  uint64_t seed = 0;
  int eval_every = 500;
  // Degradation parameters used by the sampling policy.
  int scale = 2;
  double blur_sigma = 2.0;
  int blur_kernel_size = 21;
  double noise_sigma = 0.1;
};

// Validation splits evaluated during training; PSNR per split goes to the log.
struct ValSplit {
  std::string name;
  std::vector<PairedSample> samples;
};

// Append-only training log: (step, loss, split, psnr).
class TrainLog {
 public:
  TrainLog() = default;
  explicit TrainLog(const std::string& csv_path);
  void log_loss(int step, double loss);
  void log_psnr(int step, const std::string& split, double psnr);

 private:
  std::string path_;
};

// Builds fresh params for the spec and trains on bicubic-only data.
ModelParams train_baseline(const ModelSpec& spec, const TrainConfig& config,
                           const Dataset& dataset, const std::vector<ValSplit>& val_splits = {},
                           TrainLog* log = nullptr);

// Fine-tunes the baseline on the blind policy; structure is preserved.
ModelParams finetune_target(const ModelParams& baseline, const TrainConfig& config,
                            const Dataset& dataset, const std::vector<ValSplit>& val_splits = {},
                            TrainLog* log = nullptr);

// Trains only the selected K x K filter weights from the baseline; every other
// scalar (including all biases) is bit-identical to the baseline afterwards.
ModelParams retrain_selected(const ModelParams& baseline, const FilterSet& locations,
                             const TrainConfig& config, const Dataset& dataset,
                             const std::vector<ValSplit>& val_splits = {},
                             TrainLog* log = nullptr);

// Mean PSNR of model outputs against ground truth over a sample set.
double mean_psnr(const ModelParams& params, const std::vector<PairedSample>& samples);

}  // namespace faig
