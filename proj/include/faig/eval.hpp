#pragma once

#include <map>
#include <string>
#include <vector>

#include "faig/attrib.hpp"
#include "faig/degrade.hpp"
#include "faig/metrics.hpp"
#include "faig/model.hpp"
#include "faig/train.hpp"

namespace faig {

// Target model with the selected K x K weights replaced by the baseline's at
// the same locations; biases untouched.
ModelParams mask_filters(const ModelParams& target, const ModelParams& baseline,
                         const FilterSet& filters);

struct Thresholds {
  double t_blur = 0.5;
  double t_noise = 0.6;
};

// ---- masking sweep ----

struct MethodScores {
  std::string method;  // "faig", "ig", "absdelta", ...
  std::map<std::string, DegradationScoreTable> by_degradation;  // "blur"/"noise"
};

struct MaskRow {
  std::string method;
  std::string selected_degradation;  // which filter set was masked
  double fraction = 0.0;
  std::string input_degradation;  // which eval split
  double gmse_mean = 0.0, gmse_std = 0.0;
  double psnr_mean = 0.0, psnr_std = 0.0;
};

struct MaskReport {
  std::vector<MaskRow> rows;
};

// For every (method, selected degradation, fraction, input split): mask the
// top filters and measure gray-gradient MSE between target and masked outputs
// plus PSNR of the masked model. The "random" method is run once per seed and
// aggregated mean +- std.
MaskReport mask_sweep(const ModelParams& target, const ModelParams& baseline,
                      const std::vector<MethodScores>& methods,
                      const std::vector<double>& fractions,
                      const std::map<std::string, std::vector<PairedSample>>& eval_sets,
                      const std::vector<uint64_t>& random_seeds);

void save_mask_report(const std::string& path, const MaskReport& report);

// ---- retraining comparison ----

struct RetrainRow {
  std::string method;  // includes "upper_bound" and "random"
  std::string task;    // "deblur" | "denoise"
  double psnr = 0.0;
};

struct RetrainReport {
  std::vector<RetrainRow> rows;
};

// Retrains only the given locations from the baseline on the task's
// degradation and evaluates PSNR on the matched eval split.
RetrainReport retrain_report(const ModelParams& baseline,
                             const std::map<std::string, std::map<std::string, FilterSet>>&
                                 sets_by_method_then_task,
                             const TrainConfig& retrain_config, const Dataset& train_data,
                             const std::map<std::string, std::vector<PairedSample>>& eval_sets,
                             bool include_upper_bound = true);

void save_retrain_report(const std::string& path, const RetrainReport& report);

// ---- degradation prediction ----

double overlap_score(const FilterSet& per_image, const FilterSet& per_degradation);

struct LabeledSample {
  PairedSample sample;
  std::string id;
  bool has_blur = false;
  bool has_noise = false;
};

struct PredictionRow {
  std::string id;
  bool true_blur = false, true_noise = false;
  double os_blur = 0.0, os_noise = 0.0;
  bool pred_blur = false, pred_noise = false;
};

struct PredictionReport {
  std::vector<PredictionRow> rows;
  double accuracy_blur = 0.0, accuracy_noise = 0.0;
};

// Per-image discovered set via FAIG + select_top at `fraction`, then the
// overlap scores against both degradation sets. Prediction fills in later.
std::vector<PredictionRow> compute_overlap_rows(const std::vector<LabeledSample>& samples,
                                                const FilterSet& blur_set,
                                                const FilterSet& noise_set,
                                                const ModelParams& target,
                                                const ModelParams& baseline, int n_steps,
                                                double fraction);

PredictionReport predict_from_rows(std::vector<PredictionRow> rows, const Thresholds& th);

// Single-sample prediction (labels D iff OS(x, D) >= T^D).
PredictionRow predict_degradation(const LabeledSample& sample, const FilterSet& blur_set,
                                  const FilterSet& noise_set, const Thresholds& th,
                                  const ModelParams& target, const ModelParams& baseline,
                                  int n_steps = 100, double fraction = 0.01);

// Grid {0.05, 0.10, ..., 0.95}; per degradation, the threshold maximizing
// balanced accuracy on the calibration rows, lowest gridpoint on ties.
Thresholds calibrate_thresholds(const std::vector<PredictionRow>& calibration_rows);

void save_prediction_report(const std::string& path, const PredictionReport& report);

// ---- filter distribution ----

struct FilterDistribution {
  std::vector<std::string> layer_names;  // in layer order
  std::vector<int64_t> counts;           // selected filters per layer
  std::vector<double> normalized_depth;  // layer position / (layer count - 1)
  double mean_normalized_depth = 0.0;
};

FilterDistribution filter_distribution(const FilterSet& filters, const ModelSpec& spec);

void save_filter_distribution(const std::string& path, const FilterDistribution& dist);

}  // namespace faig
