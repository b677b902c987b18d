#include "faig/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "faig/util.hpp"

namespace faig {

ModelParams mask_filters(const ModelParams& target, const ModelParams& baseline,
                         const FilterSet& filters) {
  if (!target.same_shape(baseline))
    throw std::invalid_argument("mask_filters: model spec mismatch");
  ModelParams out = target;
  const FilterScalarMap fmap(target);

  // Walk tensors by flat offset; scalar indices inside one weight tensor are
  // contiguous, so patch via the flat map.
  std::vector<float*> flat_ptr;
  std::vector<const float*> base_ptr;
  flat_ptr.reserve(out.scalar_count());
  for (size_t ti = 0; ti < out.tensors.size(); ++ti)
    for (size_t i = 0; i < out.tensors[ti].v.size(); ++i) {
      flat_ptr.push_back(&out.tensors[ti].v[i]);
      base_ptr.push_back(&baseline.tensors[ti].v[i]);
    }
  for (const auto& id : filters.ids) {
    const size_t first = fmap.first_scalar(id.flat_index);
    for (int i = 0; i < fmap.k2; ++i) *flat_ptr[first + i] = *base_ptr[first + i];
  }
  return out;
}

namespace {

double mean(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / double(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / double(v.size() - 1));
}

struct SplitEval {
  double gmse = 0.0;
  double psnr = 0.0;
};

SplitEval eval_masked(const ModelParams& masked, const std::vector<PairedSample>& samples,
                      const std::vector<ImagePatch>& target_outputs) {
  SplitEval e;
  Workspace ws;
  for (size_t i = 0; i < samples.size(); ++i) {
    const ImagePatch out = forward(masked, samples[i].lr, ws);
    e.gmse += gradient_mse(target_outputs[i], out);
    e.psnr += psnr_rgb(out, samples[i].hr);
  }
  e.gmse /= double(samples.size());
  e.psnr /= double(samples.size());
  return e;
}

}  // namespace

MaskReport mask_sweep(const ModelParams& target, const ModelParams& baseline,
                      const std::vector<MethodScores>& methods,
                      const std::vector<double>& fractions,
                      const std::map<std::string, std::vector<PairedSample>>& eval_sets,
                      const std::vector<uint64_t>& random_seeds) {
  MaskReport report;
  // Target outputs are shared by every cell.
  std::map<std::string, std::vector<ImagePatch>> target_outputs;
  {
    Workspace ws;
    for (const auto& [split, samples] : eval_sets) {
      auto& outs = target_outputs[split];
      for (const auto& s : samples) outs.push_back(forward(target, s.lr, ws));
    }
  }

  auto add_rows = [&](const std::string& method, const std::string& selected, double fraction,
                      const std::vector<FilterSet>& variants) {
    std::map<std::string, std::vector<double>> gmse, psnr;
    for (const auto& set : variants) {
      const ModelParams masked = mask_filters(target, baseline, set);
      for (const auto& [split, samples] : eval_sets) {
        const SplitEval e = eval_masked(masked, samples, target_outputs[split]);
        gmse[split].push_back(e.gmse);
        psnr[split].push_back(e.psnr);
      }
    }
    for (const auto& [split,
                      values] : gmse) {
      MaskRow row;
      row.method = method;
      row.selected_degradation = selected;
      row.fraction = fraction;
      row.input_degradation = split;
      row.gmse_mean = mean(values);
      row.gmse_std = stddev(values);
      row.psnr_mean = mean(psnr[split]);
      row.psnr_std = stddev(psnr[split]);
      report.rows.push_back(row);
    }
  };

  for (double fraction : fractions) {
    for (const auto& m : methods)
      for (const auto& [deg, table] : m.by_degradation)
        add_rows(m.method, deg, fraction, {select_top(table, target.spec, fraction)});
    std::vector<FilterSet> random_sets;
    for (uint64_t seed : random_seeds)
      random_sets.push_back(random_filterset(target.spec, fraction, seed));
    if (!random_sets.empty()) add_rows("random", "any", fraction, random_sets);
  }
  return report;
}

void save_mask_report(const std::string& path, const MaskReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "method,selected_degradation,fraction,input_degradation,gmse_mean,gmse_std,psnr_mean,"
        "psnr_std\n";
  for (const auto& r : report.rows)
    os << r.method << "," << r.selected_degradation << "," << r.fraction << ","
       << r.input_degradation << "," << r.gmse_mean << "," << r.gmse_std << "," << r.psnr_mean
       << "," << r.psnr_std << "\n";
}

RetrainReport retrain_report(const ModelParams& baseline,
                             const std::map<std::string, std::map<std::string, FilterSet>>&
                                 sets_by_method_then_task,
                             const TrainConfig& retrain_config, const Dataset& train_data,
                             const std::map<std::string, std::vector<PairedSample>>& eval_sets,
                             bool include_upper_bound) {
  RetrainReport report;
  auto task_policy = [](const std::string& task) {
    if (task == "deblur") return Policy::kBlurAlways;
    if (task == "denoise") return Policy::kNoiseAlways;
    throw std::invalid_argument("unknown task: " + task);
  };
  auto task_split = [](const std::string& task) {
    return task == "deblur" ? std::string("blurry") : std::string("noisy");
  };
  auto run = [&](const std::string& method, const std::string& task, const FilterSet& set) {
    TrainConfig cfg = retrain_config;
    cfg.policy = task_policy(task);
    const ModelParams retrained = retrain_selected(baseline, set, cfg, train_data);
    RetrainRow row;
    row.method = method;
    row.task = task;
    row.psnr = mean_psnr(retrained, eval_sets.at(task_split(task)));
    report.rows.push_back(row);
  };

  std::unordered_set<std::string> tasks;
  for (const auto& [method, by_task] : sets_by_method_then_task)
    for (const auto& [task, set] : by_task) {
      tasks.insert(task);
      run(method, task, set);
    }
  if (include_upper_bound) {
    FilterSet all;
    for (const auto& id : enumerate_filters(baseline.spec)) all.ids.push_back(id);
    all.fraction = 1.0;
    for (const auto& task : std::vector<std::string>{"deblur", "denoise"})
      if (tasks.count(task)) run("upper_bound", task, all);
  }
  return report;
}

void save_retrain_report(const std::string& path, const RetrainReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "method,task,psnr\n";
  for (const auto& r : report.rows) os << r.method << "," << r.task << "," << r.psnr << "\n";
}

double overlap_score(const FilterSet& per_image, const FilterSet& per_degradation) {
  if (per_image.ids.empty()) throw std::invalid_argument("overlap_score: empty per-image set");
  std::unordered_set<int64_t> deg;
  for (const auto& id : per_degradation.ids) deg.insert(id.flat_index);
  size_t inter = 0;
  for (const auto& id : per_image.ids) inter += deg.count(id.flat_index);
  return double(inter) / double(per_image.ids.size());
}

std::vector<PredictionRow> compute_overlap_rows(const std::vector<LabeledSample>& samples,
                                                const FilterSet& blur_set,
                                                const FilterSet& noise_set,
                                                const ModelParams& target,
                                                const ModelParams& baseline, int n_steps,
                                                double fraction) {
  const std::string td = digest_params(target), bd = digest_params(baseline);
  if (td == bd)
    throw std::invalid_argument("compute_overlap_rows: degenerate pair (target == baseline)");
  std::vector<PredictionRow> rows(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (ptrdiff_t i = 0; i < ptrdiff_t(samples.size()); ++i) {
    const LabeledSample& ls = samples[i];
    const AttributionTable t = faig_per_param(target, baseline, ls.sample, n_steps);
    const FilterSet image_set = select_top(t.per_filter, target.spec, fraction);
    PredictionRow row;
    row.id = ls.id;
    row.true_blur = ls.has_blur;
    row.true_noise = ls.has_noise;
    row.os_blur = overlap_score(image_set, blur_set);
    row.os_noise = overlap_score(image_set, noise_set);
    rows[i] = row;
  }
  return rows;
}

PredictionReport predict_from_rows(std::vector<PredictionRow> rows, const Thresholds& th) {
  PredictionReport report;
  size_t correct_blur = 0, correct_noise = 0;
  for (auto& r : rows) {
    r.pred_blur = r.os_blur >= th.t_blur;
    r.pred_noise = r.os_noise >= th.t_noise;
    correct_blur += (r.pred_blur == r.true_blur);
    correct_noise += (r.pred_noise == r.true_noise);
  }
  report.accuracy_blur = rows.empty() ? 0.0 : double(correct_blur) / double(rows.size());
  report.accuracy_noise = rows.empty() ? 0.0 : double(correct_noise) / double(rows.size());
  report.rows = std::move(rows);
  return report;
}

PredictionRow predict_degradation(const LabeledSample& sample, const FilterSet& blur_set,
                                  const FilterSet& noise_set, const Thresholds& th,
                                  const ModelParams& target, const ModelParams& baseline,
                                  int n_steps, double fraction) {
  const auto rows = compute_overlap_rows({sample}, blur_set, noise_set, target, baseline,
                                         n_steps, fraction);
  return predict_from_rows(rows, th).rows.front();
}

namespace {

double balanced_accuracy(const std::vector<std::pair<double, bool>>& os_labeled, double th) {
  size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (const auto& [os, label] : os_labeled) {
    const bool pred = os >= th;
    if (label)
      (pred ? tp : fn)++;
    else
      (pred ? fp : tn)++;
  }
  const double tpr = double(tp) / double(tp + fn);
  const double tnr = double(tn) / double(tn + fp);
  return 0.5 * (tpr + tnr);
}

double best_threshold(const std::vector<std::pair<double, bool>>& os_labeled) {
  size_t pos = 0;
  for (const auto& [os, label] : os_labeled) pos += label;
  if (pos == 0 || pos == os_labeled.size())
    throw std::invalid_argument("calibrate_thresholds: calibration set is single-class");
  double best_th = 0.05, best_acc = -1.0;
  for (int i = 1; i <= 19; ++i) {
    // i / 20.0 is the correctly rounded double for each 0.05 step; 0.05 * i
    // drifts above the decimal value (e.g. 0.15000000000000002 at i = 3) and
    // silently excludes scores sitting exactly on a grid point.
    const double th = i / 20.0;
    const double acc = balanced_accuracy(os_labeled, th);
    if (acc > best_acc + 1e-12) {
      best_acc = acc;
      best_th = th;
    }
  }
  return best_th;
}

}  // namespace

Thresholds calibrate_thresholds(const std::vector<PredictionRow>& calibration_rows) {
  std::vector<std::pair<double, bool>> blur, noise;
  for (const auto& r : calibration_rows) {
    blur.emplace_back(r.os_blur, r.true_blur);
    noise.emplace_back(r.os_noise, r.true_noise);
  }
  Thresholds th;
  th.t_blur = best_threshold(blur);
  th.t_noise = best_threshold(noise);
  return th;
}

void save_prediction_report(const std::string& path, const PredictionReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "id,true_blur,true_noise,os_blur,os_noise,pred_blur,pred_noise\n";
  for (const auto& r : report.rows)
    os << r.id << "," << r.true_blur << "," << r.true_noise << "," << r.os_blur << ","
       << r.os_noise << "," << r.pred_blur << "," << r.pred_noise << "\n";
  os << "accuracy,blur," << report.accuracy_blur << ",,,,\n";
  os << "accuracy,noise," << report.accuracy_noise << ",,,,\n";
}

FilterDistribution filter_distribution(const FilterSet& filters, const ModelSpec& spec) {
  const auto layers = conv_layers(spec);
  FilterDistribution dist;
  std::map<std::string, size_t> layer_pos;
  for (size_t i = 0; i < layers.size(); ++i) {
    layer_pos[layers[i].name] = i;
    dist.layer_names.push_back(layers[i].name);
    dist.counts.push_back(0);
    dist.normalized_depth.push_back(layers.size() > 1 ? double(i) / double(layers.size() - 1)
                                                      : 0.0);
  }
  double depth_acc = 0.0;
  for (const auto& id : filters.ids) {
    const auto it = layer_pos.find(id.layer);
    if (it == layer_pos.end())
      throw std::invalid_argument("filter_distribution: unknown layer " + id.layer);
    dist.counts[it->second]++;
    depth_acc += dist.normalized_depth[it->second];
  }
  dist.mean_normalized_depth = filters.ids.empty() ? 0.0 : depth_acc / double(filters.ids.size());
  return dist;
}

void save_filter_distribution(const std::string& path, const FilterDistribution& dist) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "layer,normalized_depth,count\n";
  for (size_t i = 0; i < dist.layer_names.size(); ++i)
    os << dist.layer_names[i] << "," << dist.normalized_depth[i] << "," << dist.counts[i] << "\n";
}

}  // namespace faig
