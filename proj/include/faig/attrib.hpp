#pragma once

#include <functional>
#include <string>
#include <vector>

#include "faig/degrade.hpp"
#include "faig/model.hpp"

namespace faig {

struct AttributionMeta {
  std::string tag;           // image id or degradation tag
  int n_steps = 0;
  std::string model_digest;  // pair digest (target^baseline) or single model
};

// Signed per-scalar contributions over the canonical flat parameter order
// (weights and biases; biases participate in the completeness sum only) and
// the per-filter aggregation sum |per_param| over each filter's K*K weights.
struct AttributionTable {
  std::vector<double> per_param;
  std::vector<double> per_filter;
  AttributionMeta meta;
};

struct DegradationScoreTable {
  std::vector<double> scores;  // length F
  std::string degradation;
  std::string dataset_id;
};

// Integrated gradients along the straight parameter path from baseline to
// target, right-endpoint Riemann sum with N uniform steps.
AttributionTable faig_per_param(const ModelParams& target, const ModelParams& baseline,
                                const PairedSample& sample, int n_steps = 100);

// Comparison baseline: gradients w.r.t. parameters accumulated along the
// input-space path from the all-zero image to sample.lr.
AttributionTable ig_input_space_scores(const ModelParams& target, const PairedSample& sample,
                                       int n_steps = 100);

struct ScoreOptions {
  int n_steps = 100;
  bool subtract_other = true;  // gradient elimination for other degradations
  uint64_t synth_seed = 0;     // degradation synthesis stream
  DegradationSpec base;        // scale/sigma/kernel defaults for both variants
};

// Builds a degraded pair (x^D, x^~D) per ground-truth image and scores every
// filter by the dataset-averaged attribution difference.
using PerSampleTable = std::function<AttributionTable(const PairedSample&)>;

// If positive_out is non-null it receives the positive term alone (the
// dataset-mean attribution for D without the elimination subtraction).
DegradationScoreTable dataset_scores(const PerSampleTable& table_fn, const Dataset& gts,
                                     const std::string& degradation, const ScoreOptions& opts,
                                     DegradationScoreTable* positive_out = nullptr);

DegradationScoreTable discriminative_scores(const ModelParams& target,
                                            const ModelParams& baseline, const Dataset& gts,
                                            const std::string& degradation,
                                            const ScoreOptions& opts);

DegradationScoreTable ig_discriminative_scores(const ModelParams& target, const Dataset& gts,
                                               const std::string& degradation,
                                               const ScoreOptions& opts);

// Degradation-agnostic |theta - theta_bar| per filter.
DegradationScoreTable abs_delta_scores(const ModelParams& target, const ModelParams& baseline);

// Top ceil(fraction*F) filters, descending score, ties by ascending flat index.
FilterSet select_top(const std::vector<double>& scores, const ModelSpec& spec, double fraction);
FilterSet select_top(const DegradationScoreTable& scores, const ModelSpec& spec, double fraction);

FilterSet random_filterset(const ModelSpec& spec, double fraction, uint64_t seed);

// The degraded pair used by dataset_scores: D and its complement.
DegradationSpec spec_for_degradation(const std::string& degradation, const DegradationSpec& base);
DegradationSpec spec_for_complement(const std::string& degradation, const DegradationSpec& base);

// ---- Serialization ----

// Binary array + JSON sidecar (<path>.json) with the meta fields.
void save_score_table(const std::string& path, const DegradationScoreTable& table,
                      const std::string& model_digest, int n_steps);
DegradationScoreTable load_score_table(const std::string& path);

// CSV: layer,out_ch,in_ch,flat_index,score. Scores may be empty.
void save_filterset(const std::string& path, const FilterSet& set,
                    const std::vector<double>& scores = {});
FilterSet load_filterset(const std::string& path, const ModelSpec& spec);

}  // namespace faig
