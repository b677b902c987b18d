#include "faig/attrib.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "faig/util.hpp"

namespace faig {

namespace {

// per_filter[f] = sum of |per_param| over the filter's K*K weight scalars.
std::vector<double> aggregate_per_filter(const std::vector<double>& per_param,
                                         const ModelParams& shape_ref) {
  const FilterScalarMap fmap(shape_ref);
  const int64_t F = filter_count(shape_ref.spec);
  std::vector<double> per_filter(size_t(F), 0.0);
  for (int64_t f = 0; f < F; ++f) {
    const size_t first = fmap.first_scalar(f);
    double acc = 0.0;
    for (int i = 0; i < fmap.k2; ++i) acc += std::fabs(per_param[first + i]);
    per_filter[size_t(f)] = acc;
  }
  return per_filter;
}

}  // namespace

AttributionTable faig_per_param(const ModelParams& target, const ModelParams& baseline,
                                const PairedSample& sample, int n_steps) {
  if (!target.same_shape(baseline))
    throw std::invalid_argument("faig_per_param: model spec mismatch");
  if (n_steps < 1) throw std::invalid_argument("faig_per_param: n_steps must be >= 1");

  ModelParams gamma = baseline;
  ModelParams grad = target.zeros_like();
  std::vector<double> grad_sum(target.scalar_count(), 0.0);
  Workspace ws;

  for (int k = 1; k <= n_steps; ++k) {
    const double alpha = double(k) / double(n_steps);
    for (size_t ti = 0; ti < gamma.tensors.size(); ++ti) {
      const auto& tv = target.tensors[ti].v;
      const auto& bv = baseline.tensors[ti].v;
      auto& gv = gamma.tensors[ti].v;
      for (size_t i = 0; i < gv.size(); ++i)
        gv[i] = float(double(bv[i]) + alpha * (double(tv[i]) - double(bv[i])));
    }
    for (auto& t : grad.tensors) std::fill(t.v.begin(), t.v.end(), 0.0f);
    grad_params_accumulate(gamma, sample, grad, ws);
    size_t flat = 0;
    for (const auto& t : grad.tensors)
      for (float g : t.v) grad_sum[flat++] += g;
  }

  AttributionTable table;
  table.per_param.resize(grad_sum.size());
  size_t flat = 0;
  for (size_t ti = 0; ti < target.tensors.size(); ++ti) {
    const auto& tv = target.tensors[ti].v;
    const auto& bv = baseline.tensors[ti].v;
    for (size_t i = 0; i < tv.size(); ++i, ++flat)
      table.per_param[flat] = (double(tv[i]) - double(bv[i])) * grad_sum[flat] / double(n_steps);
  }
  table.per_filter = aggregate_per_filter(table.per_param, target);
  table.meta.n_steps = n_steps;
  table.meta.model_digest = digest_params(target) + "^" + digest_params(baseline);
  return table;
}

AttributionTable ig_input_space_scores(const ModelParams& target, const PairedSample& sample,
                                       int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("ig_input_space_scores: n_steps must be >= 1");
  ModelParams grad = target.zeros_like();
  std::vector<double> grad_sum(target.scalar_count(), 0.0);
  Workspace ws;
  PairedSample path_sample = sample;
  for (int k = 1; k <= n_steps; ++k) {
    const double alpha = double(k) / double(n_steps);
    path_sample.lr = sample.lr;
    for (float& v : path_sample.lr.v) v = float(alpha * v);
    for (auto& t : grad.tensors) std::fill(t.v.begin(), t.v.end(), 0.0f);
    grad_params_accumulate(target, path_sample, grad, ws);
    size_t flat = 0;
    for (const auto& t : grad.tensors)
      for (float g : t.v) grad_sum[flat++] += g;
  }
  AttributionTable table;
  table.per_param.resize(grad_sum.size());
  for (size_t i = 0; i < grad_sum.size(); ++i) table.per_param[i] = grad_sum[i] / double(n_steps);
  table.per_filter = aggregate_per_filter(table.per_param, target);
  table.meta.n_steps = n_steps;
  table.meta.model_digest = digest_params(target);
  return table;
}

DegradationSpec spec_for_degradation(const std::string& degradation,
                                     const DegradationSpec& base) {
  DegradationSpec s = base;
  if (degradation == "blur") {
    s.use_blur = true;
    s.use_noise = false;
  } else if (degradation == "noise") {
    s.use_blur = false;
    s.use_noise = true;
  } else {
    throw std::invalid_argument("unknown degradation: " + degradation);
  }
  return s;
}

DegradationSpec spec_for_complement(const std::string& degradation,
                                    const DegradationSpec& base) {
  return spec_for_degradation(degradation == "blur" ? "noise" : "blur", base);
}

DegradationScoreTable dataset_scores(const PerSampleTable& table_fn, const Dataset& gts,
                                     const std::string& degradation, const ScoreOptions& opts,
                                     DegradationScoreTable* positive_out) {
  if (gts.empty()) throw std::invalid_argument("dataset_scores: empty dataset");
  const DegradationSpec spec_d = spec_for_degradation(degradation, opts.base);
  const DegradationSpec spec_o = spec_for_complement(degradation, opts.base);

  const size_t n = gts.size();
  std::vector<std::vector<double>> pos(n), neg(n);
#pragma omp parallel for schedule(dynamic)
  for (ptrdiff_t i = 0; i < ptrdiff_t(n); ++i) {
    Rng root(opts.synth_seed);
    Rng rng_d = root.fork(uint64_t(2 * i));
    Rng rng_o = root.fork(uint64_t(2 * i + 1));
    const PairedSample sample_d = degrade(gts.images[i], spec_d, rng_d);
    pos[i] = table_fn(sample_d).per_filter;
    if (opts.subtract_other) {
      const PairedSample sample_o = degrade(gts.images[i], spec_o, rng_o);
      neg[i] = table_fn(sample_o).per_filter;
    }
  }

  // Fixed-order reduction, image index order.
  DegradationScoreTable out;
  out.degradation = degradation;
  out.scores.assign(pos[0].size(), 0.0);
  std::vector<double> pos_sum(pos[0].size(), 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t f = 0; f < out.scores.size(); ++f) {
      pos_sum[f] += pos[i][f];
      out.scores[f] += pos[i][f] - (opts.subtract_other ? neg[i][f] : 0.0);
    }
  for (double& s : out.scores) s /= double(n);
  for (double& s : pos_sum) s /= double(n);
  if (positive_out) {
    positive_out->degradation = degradation;
    positive_out->scores = std::move(pos_sum);
  }
  return out;
}

DegradationScoreTable discriminative_scores(const ModelParams& target,
                                            const ModelParams& baseline, const Dataset& gts,
                                            const std::string& degradation,
                                            const ScoreOptions& opts) {
  if (!target.same_shape(baseline))
    throw std::invalid_argument("discriminative_scores: model spec mismatch");
  return dataset_scores(
      [&](const PairedSample& s) { return faig_per_param(target, baseline, s, opts.n_steps); },
      gts, degradation, opts);
}

DegradationScoreTable ig_discriminative_scores(const ModelParams& target, const Dataset& gts,
                                               const std::string& degradation,
                                               const ScoreOptions& opts) {
  return dataset_scores(
      [&](const PairedSample& s) { return ig_input_space_scores(target, s, opts.n_steps); }, gts,
      degradation, opts);
}

DegradationScoreTable abs_delta_scores(const ModelParams& target, const ModelParams& baseline) {
  if (!target.same_shape(baseline))
    throw std::invalid_argument("abs_delta_scores: model spec mismatch");
  std::vector<double> per_param(target.scalar_count(), 0.0);
  size_t flat = 0;
  for (size_t ti = 0; ti < target.tensors.size(); ++ti) {
    const auto& tv = target.tensors[ti].v;
    const auto& bv = baseline.tensors[ti].v;
    for (size_t i = 0; i < tv.size(); ++i, ++flat)
      per_param[flat] = std::fabs(double(tv[i]) - double(bv[i]));
  }
  DegradationScoreTable out;
  out.degradation = "any";
  out.scores = aggregate_per_filter(per_param, target);
  return out;
}

FilterSet select_top(const std::vector<double>& scores, const ModelSpec& spec, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("select_top: fraction must be in (0, 1]");
  const int64_t F = filter_count(spec);
  if (int64_t(scores.size()) != F)
    throw std::invalid_argument("select_top: score vector length mismatch");
  std::vector<int64_t> order(static_cast<size_t>(F));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (scores[size_t(a)] != scores[size_t(b)]) return scores[size_t(a)] > scores[size_t(b)];
    return a < b;
  });
  const int64_t take = int64_t(std::ceil(fraction * double(F)));
  FilterSet set;
  for (int64_t i = 0; i < take; ++i) set.ids.push_back(filter_from_flat(spec, order[size_t(i)]));
  set.fraction = double(take) / double(F);
  return set;
}

FilterSet select_top(const DegradationScoreTable& scores, const ModelSpec& spec,
                     double fraction) {
  return select_top(scores.scores, spec, fraction);
}

FilterSet random_filterset(const ModelSpec& spec, double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("random_filterset: fraction must be in (0, 1]");
  const int64_t F = filter_count(spec);
  const int64_t take = int64_t(std::ceil(fraction * double(F)));
  std::vector<int64_t> idx(static_cast<size_t>(F));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (int64_t i = 0; i < take; ++i) {
    const int64_t j = i + int64_t(rng.uniform_int(uint64_t(F - i)));
    std::swap(idx[size_t(i)], idx[size_t(j)]);
  }
  FilterSet set;
  for (int64_t i = 0; i < take; ++i) set.ids.push_back(filter_from_flat(spec, idx[size_t(i)]));
  set.fraction = double(take) / double(F);
  return set;
}

// ---- serialization ----

void save_score_table(const std::string& path, const DegradationScoreTable& table,
                      const std::string& model_digest, int n_steps) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    const uint64_t n = table.scores.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(reinterpret_cast<const char*>(table.scores.data()),
             std::streamsize(n * sizeof(double)));
  }
  const nlohmann::json sidecar = {{"degradation", table.degradation},
                                  {"dataset_id", table.dataset_id},
                                  {"model_digest", model_digest},
                                  {"n_steps", n_steps},
                                  {"count", table.scores.size()}};
  std::ofstream js(path + ".json");
  js << sidecar.dump(2) << "\n";
}

DegradationScoreTable load_score_table(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open score table: " + path);
  uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  DegradationScoreTable table;
  table.scores.resize(n);
  is.read(reinterpret_cast<char*>(table.scores.data()), std::streamsize(n * sizeof(double)));
  if (!is) throw std::runtime_error("truncated score table: " + path);
  std::ifstream js(path + ".json");
  if (js) {
    nlohmann::json sidecar;
    js >> sidecar;
    table.degradation = sidecar.value("degradation", "");
    table.dataset_id = sidecar.value("dataset_id", "");
  }
  return table;
}

void save_filterset(const std::string& path, const FilterSet& set,
                    const std::vector<double>& scores) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "layer,out_ch,in_ch,flat_index,score\n";
  for (size_t i = 0; i < set.ids.size(); ++i) {
    const auto& id = set.ids[i];
    os << id.layer << "," << id.out_ch << "," << id.in_ch << "," << id.flat_index << ",";
    if (i < scores.size()) os << scores[i];
    os << "\n";
  }
}

FilterSet load_filterset(const std::string& path, const ModelSpec& spec) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open filter set: " + path);
  std::string line;
  std::getline(is, line);  // header
  FilterSet set;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string layer, field;
    std::getline(ss, layer, ',');
    std::getline(ss, field, ',');
    const int oc = std::stoi(field);
    std::getline(ss, field, ',');
    const int ic = std::stoi(field);
    std::getline(ss, field, ',');
    const int64_t flat = std::stoll(field);
    const FilterId id = filter_from_flat(spec, flat);
    if (id.layer != layer || id.out_ch != oc || id.in_ch != ic)
      throw std::runtime_error("filter set does not match model spec: " + path);
    set.ids.push_back(id);
  }
  set.fraction = double(set.ids.size()) / double(filter_count(spec));
  return set;
}

}  // namespace faig
