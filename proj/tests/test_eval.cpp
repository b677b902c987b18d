#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "faig/eval.hpp"

using namespace faig;

namespace {

ModelSpec tiny_spec() {
  return {.arch = "srresnet_nobn", .channels = 4, .num_blocks = 1, .scale = 1};
}

ModelParams perturbed(const ModelParams& p, double amount, uint64_t seed) {
  ModelParams q = p;
  Rng rng(seed);
  for (auto& t : q.tensors)
    for (float& v : t.v) v += float(rng.normal() * amount);
  return q;
}

FilterSet set_of(const ModelSpec& spec, std::initializer_list<int64_t> flats) {
  FilterSet s;
  for (int64_t f : flats) s.ids.push_back(filter_from_flat(spec, f));
  s.fraction = double(s.ids.size()) / double(filter_count(spec));
  return s;
}

}  // namespace

TEST_CASE("masking restores baseline weights only at the selected filters") {
  Rng rng(1);
  const ModelParams baseline = build(tiny_spec(), rng);
  const ModelParams target = perturbed(baseline, 0.1, 2);
  const FilterSet sel = set_of(tiny_spec(), {0, 7, 20});
  const ModelParams masked = mask_filters(target, baseline, sel);

  const FilterScalarMap fmap(target);
  std::vector<bool> selected(target.scalar_count(), false);
  for (const auto& id : sel.ids)
    for (int i = 0; i < 9; ++i) selected[fmap.first_scalar(id.flat_index) + i] = true;

  size_t flat = 0;
  for (size_t ti = 0; ti < target.tensors.size(); ++ti)
    for (size_t i = 0; i < target.tensors[ti].v.size(); ++i, ++flat) {
      const float want =
          selected[flat] ? baseline.tensors[ti].v[i] : target.tensors[ti].v[i];
      REQUIRE(masked.tensors[ti].v[i] == want);
    }
}

TEST_CASE("overlap score boundary cases") {
  const ModelSpec spec = tiny_spec();
  const FilterSet a = set_of(spec, {1, 2, 3, 4});
  const FilterSet b = set_of(spec, {1, 2, 3, 4});
  const FilterSet c = set_of(spec, {10, 11, 12, 13});
  const FilterSet half = set_of(spec, {1, 2, 10, 11});
  CHECK(overlap_score(a, b) == 1.0);
  CHECK(overlap_score(a, c) == 0.0);
  CHECK(overlap_score(half, b) == 0.5);
  CHECK_THROWS_AS(overlap_score(FilterSet{}, b), std::invalid_argument);
}

TEST_CASE("threshold calibration maximizes balanced accuracy, lowest on ties") {
  // Blur OS values: positives at {0.8, 0.9}, negatives at {0.1, 0.2}; any
  // threshold in (0.2, 0.8] is perfect, so the grid picks 0.25.
  std::vector<PredictionRow> rows;
  auto add = [&](double osb, double osn, bool tb, bool tn) {
    PredictionRow r;
    r.os_blur = osb;
    r.os_noise = osn;
    r.true_blur = tb;
    r.true_noise = tn;
    rows.push_back(r);
  };
  add(0.8, 0.7, true, true);
  add(0.9, 0.6, true, true);
  add(0.1, 0.05, false, false);
  add(0.2, 0.15, false, false);
  const Thresholds th = calibrate_thresholds(rows);
  CHECK(th.t_blur == doctest::Approx(0.25));
  CHECK(th.t_noise == doctest::Approx(0.20));
}

TEST_CASE("prediction applies thresholds per degradation") {
  std::vector<PredictionRow> rows;
  PredictionRow r;
  r.os_blur = 0.7;
  r.os_noise = 0.3;
  r.true_blur = true;
  r.true_noise = false;
  rows.push_back(r);
  r.os_blur = 0.2;
  r.os_noise = 0.9;
  r.true_blur = false;
  r.true_noise = true;
  rows.push_back(r);
  const PredictionReport rep = predict_from_rows(rows, Thresholds{0.5, 0.5});
  CHECK(rep.rows[0].pred_blur);
  CHECK_FALSE(rep.rows[0].pred_noise);
  CHECK_FALSE(rep.rows[1].pred_blur);
  CHECK(rep.rows[1].pred_noise);
  CHECK(rep.accuracy_blur == 1.0);
  CHECK(rep.accuracy_noise == 1.0);

  // Flipping one blur prediction halves the blur accuracy only.
  const PredictionReport worse = predict_from_rows(rows, Thresholds{0.1, 0.5});
  CHECK(worse.accuracy_blur == 0.5);
  CHECK(worse.accuracy_noise == 1.0);
}

TEST_CASE("filter distribution counts per layer and normalizes depth") {
  const ModelSpec spec = tiny_spec();
  // Layers: head, block0.conv1, block0.conv2, trunk, upsample, tail (6).
  const auto layers = conv_layers(spec);
  REQUIRE(layers.size() == 6);
  FilterSet set;
  const auto all = enumerate_filters(spec);
  set.ids.push_back(all.front());                       // head
  set.ids.push_back(all.back());                        // tail
  set.ids.push_back(all[all.size() - 1]);               // tail again
  const FilterDistribution d = filter_distribution(set, spec);
  REQUIRE(d.layer_names.size() == 6);
  CHECK(d.counts[0] == 1);
  CHECK(d.counts[5] == 2);
  CHECK(d.normalized_depth[0] == 0.0);
  CHECK(d.normalized_depth[5] == 1.0);
  CHECK(d.mean_normalized_depth == doctest::Approx((0.0 + 1.0 + 1.0) / 3.0));
}

TEST_CASE("mask sweep emits one row per method/selection/fraction/split") {
  Rng rng(5);
  const ModelParams baseline = build(tiny_spec(), rng);
  const ModelParams target = perturbed(baseline, 0.05, 6);
  const int64_t F = filter_count(tiny_spec());

  MethodScores ms;
  ms.method = "faig";
  for (const char* deg : {"blur", "noise"}) {
    DegradationScoreTable t;
    t.degradation = deg;
    t.scores.resize(size_t(F));
    Rng srng(deg[0]);
    for (double& s : t.scores) s = srng.uniform();
    ms.by_degradation[deg] = t;
  }

  std::map<std::string, std::vector<PairedSample>> eval_sets;
  Dataset gts = procedural_dataset(2, 16, 16, 50);
  DegradationSpec spec;
  spec.scale = 1;
  Rng drng(7);
  for (const char* split : {"blurry", "noisy"}) {
    std::vector<PairedSample> samples;
    for (const auto& img : gts.images) samples.push_back(degrade(img, spec, drng));
    eval_sets[split] = samples;
  }

  const MaskReport report = mask_sweep(target, baseline, {ms}, {0.05, 0.2}, eval_sets, {1, 2});
  // 2 fractions x (2 faig selections + 1 random) x 2 splits.
  CHECK(report.rows.size() == 12);
  for (const auto& row : report.rows) {
    CHECK(row.gmse_mean >= 0.0);
    CHECK(std::isfinite(row.psnr_mean));
    if (row.method == "random") CHECK(row.selected_degradation == "any");
  }
  const std::string path = "test_mask.csv";
  save_mask_report(path, report);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "method,selected_degradation,fraction,input_degradation,gmse_mean,gmse_std,psnr_mean,"
        "psnr_std");
  std::remove(path.c_str());
}
