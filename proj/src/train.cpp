#include "faig/train.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "faig/metrics.hpp"

namespace faig {

TrainLog::TrainLog(const std::string& csv_path) : path_(csv_path) {
  std::ofstream os(path_, std::ios::trunc);
  os << "step,loss,split,psnr\n";
}

void TrainLog::log_loss(int step, double loss) {
  if (path_.empty()) return;
  std::ofstream os(path_, std::ios::app);
  os << step << "," << loss << ",,\n";
}

void TrainLog::log_psnr(int step, const std::string& split, double psnr) {
  if (path_.empty()) return;
  std::ofstream os(path_, std::ios::app);
  os << step << ",," << split << "," << psnr << "\n";
}

double mean_psnr(const ModelParams& params, const std::vector<PairedSample>& samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  Workspace ws;
  for (const auto& s : samples) acc += psnr_rgb(forward(params, s.lr, ws), s.hr);
  return acc / double(samples.size());
}

namespace {

struct Adam {
  ModelParams m, v;
  double beta1 = 0.9, beta2 = 0.99, eps = 1e-8;
  int t = 0;

  explicit Adam(const ModelParams& p) : m(p.zeros_like()), v(p.zeros_like()) {}

  void step(ModelParams& p, const ModelParams& grad, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (size_t ti = 0; ti < p.tensors.size(); ++ti) {
      auto& pv = p.tensors[ti].v;
      auto& mv = m.tensors[ti].v;
      auto& vv = v.tensors[ti].v;
      const auto& gv = grad.tensors[ti].v;
      for (size_t i = 0; i < pv.size(); ++i) {
        const double g = gv[i];
        mv[i] = float(beta1 * mv[i] + (1.0 - beta1) * g);
        vv[i] = float(beta2 * vv[i] + (1.0 - beta2) * g * g);
        const double mh = mv[i] / bc1, vh = vv[i] / bc2;
        pv[i] = float(pv[i] - lr * mh / (std::sqrt(vh) + eps));
      }
    }
  }
};

double lr_at(const TrainConfig& cfg, int step) {
  if (cfg.schedule == "fixed") return cfg.lr;
  if (cfg.schedule == "cosine") {
    const double t = cfg.iterations <= 1 ? 1.0 : double(step) / double(cfg.iterations - 1);
    return cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(3.14159265358979323846 * t));
  }
  throw std::invalid_argument("unknown lr schedule: " + cfg.schedule);
}

// Core loop. `trainable` (per flat scalar, optional) zeroes gradients of
// frozen coordinates before each optimizer step; frozen coordinates are
// additionally restored bit-exactly afterwards.
ModelParams run_training(ModelParams params, const TrainConfig& cfg, const Dataset& dataset,
                         const std::vector<char>* trainable,
                         const std::vector<ValSplit>& val_splits, TrainLog* log) {
  if (cfg.iterations < 0 || cfg.batch_size < 1 || cfg.patch_size < 1 || cfg.lr <= 0.0)
    throw std::invalid_argument("run_training: bad config");
  const ModelParams frozen_ref = params;
  Adam opt(params);
  ModelParams grad = params.zeros_like();
  Workspace ws;
  Rng rng(cfg.seed);

  BatchPolicy bp;
  bp.policy = cfg.policy;
  bp.patch_size = cfg.patch_size;
  bp.scale = cfg.scale;
  bp.blur_sigma = cfg.blur_sigma;
  bp.kernel_size = cfg.blur_kernel_size;
  bp.noise_sigma = cfg.noise_sigma;

  for (int step = 0; step < cfg.iterations; ++step) {
    const auto batch = sample_training_batch(dataset, bp, cfg.batch_size, rng);
    for (auto& t : grad.tensors) std::fill(t.v.begin(), t.v.end(), 0.0f);
    double loss_acc = 0.0;
    for (const auto& s : batch) loss_acc += grad_params_accumulate(params, s, grad, ws);
    loss_acc /= batch.size();
    const float inv = 1.0f / float(batch.size());
    for (auto& t : grad.tensors)
      for (float& g : t.v) g *= inv;

    if (!std::isfinite(loss_acc))
      throw std::runtime_error("training diverged: non-finite loss at step " +
                               std::to_string(step));

    if (trainable) {
      size_t flat = 0;
      for (auto& t : grad.tensors)
        for (float& g : t.v) {
          if (!(*trainable)[flat]) g = 0.0f;
          ++flat;
        }
    }

    opt.step(params, grad, lr_at(cfg, step));

    if (log && (step % 100 == 0 || step + 1 == cfg.iterations)) log->log_loss(step, loss_acc);
    if (!val_splits.empty() && cfg.eval_every > 0 &&
        ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.iterations)) {
      for (const auto& split : val_splits) {
        const double p = mean_psnr(params, split.samples);
        if (log) log->log_psnr(step + 1, split.name, p);
      }
    }
  }

  if (trainable) {
    size_t flat = 0;
    for (size_t ti = 0; ti < params.tensors.size(); ++ti) {
      auto& pv = params.tensors[ti].v;
      const auto& rv = frozen_ref.tensors[ti].v;
      for (size_t i = 0; i < pv.size(); ++i, ++flat)
        if (!(*trainable)[flat]) pv[i] = rv[i];
    }
  }
  return params;
}

}  // namespace

ModelParams train_baseline(const ModelSpec& spec, const TrainConfig& config,
                           const Dataset& dataset, const std::vector<ValSplit>& val_splits,
                           TrainLog* log) {
  if (config.policy != Policy::kBicubicOnly)
    throw std::invalid_argument("train_baseline: policy must be bicubic-only");
  Rng init_rng(config.seed);
  ModelParams params = build(spec, init_rng);
  return run_training(std::move(params), config, dataset, nullptr, val_splits, log);
}

ModelParams finetune_target(const ModelParams& baseline, const TrainConfig& config,
                            const Dataset& dataset, const std::vector<ValSplit>& val_splits,
                            TrainLog* log) {
  if (config.policy != Policy::kBlind)
    throw std::invalid_argument("finetune_target: policy must be blind");
  return run_training(baseline, config, dataset, nullptr, val_splits, log);
}

ModelParams retrain_selected(const ModelParams& baseline, const FilterSet& locations,
                             const TrainConfig& config, const Dataset& dataset,
                             const std::vector<ValSplit>& val_splits, TrainLog* log) {
  std::unordered_set<std::string> layer_names;
  for (const auto& l : conv_layers(baseline.spec)) layer_names.insert(l.name);
  for (const auto& id : locations.ids)
    if (!layer_names.count(id.layer))
      throw std::invalid_argument("retrain_selected: unknown layer " + id.layer);

  std::vector<char> trainable(baseline.scalar_count(), 0);
  const FilterScalarMap fmap(baseline);
  for (const auto& id : locations.ids) {
    const size_t first = fmap.first_scalar(id.flat_index);
    for (int i = 0; i < fmap.k2; ++i) trainable[first + i] = 1;
  }
  return run_training(baseline, config, dataset, &trainable, val_splits, log);
}

}  // namespace faig
