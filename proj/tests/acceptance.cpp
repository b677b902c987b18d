// End-to-end acceptance: runs the pinned desk-scale pipeline (or reuses a
// previous run under FAIG_OUTPUT_DIR / acceptance_out if the config digest
// matches) and checks every release criterion, one PASS/FAIL line each.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "faig/experiment.hpp"
#include "faig/util.hpp"

using namespace faig;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int num, const std::string& name, bool pass, const std::string& detail = "") {
  std::printf("criterion %2d (%s): %s%s%s\n", num, name.c_str(), pass ? "PASS" : "FAIL",
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

ImagePatch random_image(int h, int w, uint64_t seed) {
  ImagePatch img(3, h, w);
  Rng rng(seed);
  for (float& v : img.v) v = float(rng.uniform());
  return img;
}

// ---- report parsing ----

struct MaskCell {
  double gmse = 0.0;
  bool found = false;
};

std::map<std::string, MaskCell> load_mask_cells(const std::string& path) {
  std::map<std::string, MaskCell> cells;
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string method, sel, frac, input, gmse;
    std::getline(ss, method, ',');
    std::getline(ss, sel, ',');
    std::getline(ss, frac, ',');
    std::getline(ss, input, ',');
    std::getline(ss, gmse, ',');
    char key[128];
    std::snprintf(key, sizeof(key), "%s|%s|%.4f|%s", method.c_str(), sel.c_str(),
                  std::stod(frac), input.c_str());
    cells[key] = {std::stod(gmse), true};
  }
  return cells;
}

MaskCell cell(const std::map<std::string, MaskCell>& cells, const std::string& method,
              const std::string& sel, double frac, const std::string& input) {
  char key[128];
  std::snprintf(key, sizeof(key), "%s|%s|%.4f|%s", method.c_str(), sel.c_str(), frac,
                input.c_str());
  const auto it = cells.find(key);
  return it == cells.end() ? MaskCell{} : it->second;
}

std::map<std::string, double> load_retrain_cells(const std::string& path) {
  std::map<std::string, double> cells;
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string method, task, psnr;
    std::getline(ss, method, ',');
    std::getline(ss, task, ',');
    std::getline(ss, psnr, ',');
    cells[method + "|" + task] = std::stod(psnr);
  }
  return cells;
}

double faig_total(const ModelParams& target, const ModelParams& baseline, const PairedSample& s,
                  int n) {
  const AttributionTable t = faig_per_param(target, baseline, s, n);
  double acc = 0.0;
  for (double v : t.per_param) acc += v;
  return acc;
}

// ---- criteria ----

void criterion_completeness(const ExperimentConfig& cfg, const ModelParams& target,
                            const ModelParams& baseline) {
  const DegradationSpec base{.blur_sigma = cfg.blur_sigma,
                             .kernel_size = cfg.blur_kernel_size,
                             .noise_sigma = cfg.noise_sigma,
                             .scale = cfg.model.scale};
  Rng rng(0xacce97);
  double worst100 = 0.0, sum10 = 0.0, sum1000 = 0.0;
  for (int i = 0; i < 10; ++i) {
    DegradationSpec spec = base;
    spec.use_blur = (i % 2 == 0);
    spec.use_noise = (i % 3 != 0);
    Rng srng = rng.fork(uint64_t(i));
    const PairedSample s = degrade(random_image(48, 48, uint64_t(900 + i)), spec, srng);
    const double dl = loss(target, s) - loss(baseline, s);
    const double ad = std::fabs(dl);
    worst100 = std::max(worst100, std::fabs(faig_total(target, baseline, s, 100) - dl) / ad);
    sum10 += std::fabs(faig_total(target, baseline, s, 10) - dl) / ad;
    sum1000 += std::fabs(faig_total(target, baseline, s, 1000) - dl) / ad;
  }
  const bool pass = worst100 < 0.05 && sum1000 / 10.0 < sum10 / 10.0;
  report(1, "path-integral completeness", pass,
         "max rel err@N=100 " + fmt(worst100) + ", mean err N=1000 " + fmt(sum1000 / 10.0) +
             " vs N=10 " + fmt(sum10 / 10.0));
}

void criterion_zero_path(const ExperimentConfig& cfg, const ModelParams& target) {
  DegradationSpec spec{.use_blur = true, .use_noise = true, .scale = cfg.model.scale};
  Rng rng(12);
  const PairedSample s = degrade(random_image(32, 32, 7), spec, rng);
  const AttributionTable t = faig_per_param(target, target, s, 10);
  bool pass = true;
  for (double v : t.per_param) pass &= (v == 0.0);
  report(2, "zero path is exactly zero", pass);
}

void criterion_grad_check() {
  double worst = 0.0;
  for (const char* arch : {"srcnn9", "srresnet_nobn"}) {
    ModelSpec spec{.arch = arch, .channels = 8, .num_blocks = 2, .scale = 2};
    Rng rng(21);
    ModelParams p = build(spec, rng);
    PairedSample s;
    s.lr = random_image(6, 6, 22);
    s.hr = random_image(12, 12, 23);
    const ModelParams g = grad_params(p, s);
    Rng pick(24);
    for (int trial = 0; trial < 20; ++trial) {
      const size_t ti = size_t(pick.uniform_int(p.tensors.size()));
      const size_t ei = size_t(pick.uniform_int(p.tensors[ti].v.size()));
      const float orig = p.tensors[ti].v[ei];
      const float hi = float(double(orig) + 1e-4), lo = float(double(orig) - 1e-4);
      p.tensors[ti].v[ei] = hi;
      const double lp = loss_fp64(p, s);
      p.tensors[ti].v[ei] = lo;
      const double lm = loss_fp64(p, s);
      p.tensors[ti].v[ei] = orig;
      const double fd = (lp - lm) / (double(hi) - double(lo));
      const double an = double(g.tensors[ti].v[ei]);
      worst = std::max(worst, std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-8}));
    }
  }
  report(3, "finite-difference gradient check", worst < 1e-3, "max rel err " + fmt(worst));
}

void criterion_mask_selectivity(const ExperimentConfig& cfg) {
  // Seed-averaged cells at the 1% fraction.
  auto avg = [&](const std::string& method, const std::string& sel, const std::string& input) {
    double acc = 0.0;
    int n = 0;
    for (uint64_t seed : cfg.seeds) {
      const auto cells = load_mask_cells(seed_paths(cfg, seed).mask_report);
      const MaskCell c = cell(cells, method, sel, cfg.select_fraction, input);
      if (c.found) {
        acc += c.gmse;
        ++n;
      }
    }
    return n ? acc / n : -1.0;
  };
  const double fb_b = avg("faig", "blur", "blurry"), fb_n = avg("faig", "blur", "noisy");
  const double fn_n = avg("faig", "noise", "noisy"), fn_b = avg("faig", "noise", "blurry");
  const double r_b = avg("random", "any", "blurry"), r_n = avg("random", "any", "noisy");
  const bool pass = fb_b >= 5.0 * r_b && fb_n <= 0.5 * fb_b && fn_n >= 5.0 * r_n &&
                    fn_b <= 0.5 * fn_n && fb_b > 0 && fn_n > 0;
  report(4, "masking selectivity vs random", pass,
         "deblur " + fmt(fb_b) + " vs rnd " + fmt(r_b) + " (cross " + fmt(fb_n) + "), denoise " +
             fmt(fn_n) + " vs rnd " + fmt(r_n) + " (cross " + fmt(fn_b) + ")");
}

void criterion_method_ordering(const ExperimentConfig& cfg) {
  int pass_seeds = 0;
  std::string detail;
  for (uint64_t seed : cfg.seeds) {
    const auto cells = load_mask_cells(seed_paths(cfg, seed).mask_report);
    // Matched-input gMSE at 1%, averaged over the two degradations.
    auto matched = [&](const std::string& method) {
      if (method == "random")
        return 0.5 * (cell(cells, "random", "any", cfg.select_fraction, "blurry").gmse +
                      cell(cells, "random", "any", cfg.select_fraction, "noisy").gmse);
      return 0.5 * (cell(cells, method, "blur", cfg.select_fraction, "blurry").gmse +
                    cell(cells, method, "noise", cfg.select_fraction, "noisy").gmse);
    };
    const double f = matched("faig"), ig = matched("ig"), ad = matched("absdelta"),
                 rnd = matched("random");
    const bool ok = f > ig && f > ad && ad > rnd;
    pass_seeds += ok;
    detail += "s" + std::to_string(seed) + (ok ? "+" : "-") + " faig " + fmt(f) + " ig " +
              fmt(ig) + " absdelta " + fmt(ad) + " random " + fmt(rnd) + "; ";
  }
  report(5, "method ordering at 1%", pass_seeds >= 2, detail);
}

void criterion_retrain(const ExperimentConfig& cfg, const ModelParams& baseline) {
  int deblur_ok = 0, denoise_ok = 0;
  std::string detail;
  for (uint64_t seed : cfg.seeds) {
    const auto cells = load_retrain_cells(seed_paths(cfg, seed).retrain_report);
    for (const char* task : {"deblur", "denoise"}) {
      const double up = cells.at(std::string("upper_bound|") + task);
      const double fa = cells.at(std::string("faig|") + task);
      const double rn = cells.at(std::string("random|") + task);
      const bool ok = up >= fa && fa >= rn + 0.3;
      (std::string(task) == "deblur" ? deblur_ok : denoise_ok) += ok;
      detail += "s" + std::to_string(seed) + " " + task + (ok ? "+" : "-") + " " + fmt(up) +
                "/" + fmt(fa) + "/" + fmt(rn) + "; ";
    }
  }

  // Freeze contract, verified directly on a short constrained run.
  FilterSet sel;
  for (int64_t f : {int64_t(1), int64_t(9)}) sel.ids.push_back(filter_from_flat(cfg.model, f));
  TrainConfig tc = cfg.retrain;
  tc.iterations = 5;
  tc.policy = Policy::kBlurAlways;
  const Dataset data = make_train_dataset(cfg);
  const ModelParams rt = retrain_selected(baseline, sel, tc, data);
  const FilterScalarMap fmap(baseline);
  std::vector<bool> trainable(baseline.scalar_count(), false);
  for (const auto& id : sel.ids)
    for (int i = 0; i < fmap.k2; ++i) trainable[fmap.first_scalar(id.flat_index) + i] = true;
  bool frozen_exact = true;
  size_t flat = 0;
  for (size_t ti = 0; ti < baseline.tensors.size(); ++ti)
    for (size_t i = 0; i < baseline.tensors[ti].v.size(); ++i, ++flat)
      if (!trainable[flat]) frozen_exact &= (rt.tensors[ti].v[i] == baseline.tensors[ti].v[i]);

  report(6, "location-constrained retraining", deblur_ok >= 2 && denoise_ok >= 2 && frozen_exact,
         detail + (frozen_exact ? "freeze exact" : "FREEZE VIOLATED"));
}

void criterion_prediction(const ExperimentConfig& cfg) {
  const std::string path = seed_paths(cfg, cfg.seeds.front()).dir + "/thresholds.json";
  bool pass = false;
  std::string detail = "missing " + path;
  if (fs::exists(path)) {
    std::ifstream is(path);
    nlohmann::json j;
    is >> j;
    const double ab = j.at("accuracy_blur").get<double>();
    const double an = j.at("accuracy_noise").get<double>();
    pass = ab >= 0.9 && an >= 0.9 && j.at("calibrated").get<bool>();
    detail = "blur " + fmt(ab) + ", noise " + fmt(an);
  }
  report(7, "degradation prediction accuracy", pass, detail);
}

void criterion_no_subtraction(const ExperimentConfig& cfg) {
  double nosub = 0.0, full = 0.0;
  int n = 0;
  for (uint64_t seed : cfg.seeds) {
    const auto cells = load_mask_cells(seed_paths(cfg, seed).mask_report);
    const MaskCell a = cell(cells, "faig_nosub", "blur", cfg.select_fraction, "noisy");
    const MaskCell b = cell(cells, "faig", "blur", cfg.select_fraction, "noisy");
    if (a.found && b.found) {
      nosub += a.gmse;
      full += b.gmse;
      ++n;
    }
  }
  const bool pass = n > 0 && nosub >= 3.0 * full;
  report(8, "gradient-elimination ablation", pass,
         "no-subtraction " + fmt(n ? nosub / n : -1) + " vs full " + fmt(n ? full / n : -1));
}

void criterion_exact_units(const ExperimentConfig& cfg) {
  bool pass = true;
  ImagePatch a(3, 8, 8), b(3, 8, 8);
  a.fill(0.4f);
  b.fill(0.5f);
  pass &= std::fabs(psnr_rgb(a, b) - 20.0) < 1e-4;
  ImagePatch g(3, 8, 8);
  Rng grng(3);
  for (float& v : g.v) v = float(grng.uniform_int(128) + 64) / 256.0f;
  ImagePatch gs = g;
  for (float& v : gs.v) v += 0.0625f;  // exactly representable shift
  pass &= (gradient_mse(g, gs) == 0.0);

  FilterSet s1, s2;
  for (int64_t f : {int64_t(0), int64_t(1)}) s1.ids.push_back(filter_from_flat(cfg.model, f));
  for (int64_t f : {int64_t(5), int64_t(6)}) s2.ids.push_back(filter_from_flat(cfg.model, f));
  pass &= (overlap_score(s1, s1) == 1.0);
  pass &= (overlap_score(s1, s2) == 0.0);

  const int64_t F = filter_count(cfg.model);
  std::vector<double> scores(size_t(F), 0.0);
  pass &= int64_t(select_top(scores, cfg.model, 0.01).ids.size()) ==
          int64_t(std::ceil(0.01 * double(F)));
  report(9, "exact-arithmetic unit checks", pass);
}

void criterion_determinism() {
  ExperimentConfig tiny;
  apply_override(tiny, "model.channels=4");
  apply_override(tiny, "model.num_blocks=1");
  apply_override(tiny, "data.train_images=4");
  apply_override(tiny, "data.train_image_size=48");
  apply_override(tiny, "data.eval_image_size=32");
  apply_override(tiny, "baseline.iterations=30");
  apply_override(tiny, "baseline.batch_size=2");
  apply_override(tiny, "baseline.patch_size=24");
  apply_override(tiny, "finetune.iterations=20");
  apply_override(tiny, "finetune.batch_size=2");
  apply_override(tiny, "finetune.patch_size=24");
  apply_override(tiny, "retrain.iterations=10");
  apply_override(tiny, "retrain.batch_size=2");
  apply_override(tiny, "retrain.patch_size=24");
  apply_override(tiny, "attrib.n_steps=4");
  apply_override(tiny, "attrib.images=2");
  apply_override(tiny, "attrib.sweep_fractions=0.05,0.2");
  apply_override(tiny, "attrib.mask_fractions=0.05");
  apply_override(tiny, "attrib.select_fraction=0.05");
  apply_override(tiny, "eval.mask_eval_images=2");
  apply_override(tiny, "eval.calib_images=6");
  apply_override(tiny, "eval.test_images=8");
  apply_override(tiny, "run.seeds=0");

  auto run_into = [&](const std::string& dir) {
    ExperimentConfig cfg = tiny;
    cfg.out_dir = dir;
    fs::remove_all(dir);
    run_reproduce_all(cfg);
  };
  run_into("determinism_a");
  run_into("determinism_b");

  bool pass = true;
  std::string detail;
  size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator("determinism_a")) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    const std::string rel = fs::relative(entry.path(), "determinism_a").string();
    std::ifstream fa(entry.path(), std::ios::binary);
    std::ifstream fb("determinism_b/" + rel, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    ++compared;
    if (sa.str() != sb.str()) {
      pass = false;
      detail += rel + " differs; ";
    }
  }
  pass &= compared > 0;
  report(10, "bit-identical reruns", pass,
         detail.empty() ? (std::to_string(compared) + " CSVs identical") : detail);
  fs::remove_all("determinism_a");
  fs::remove_all("determinism_b");
}

}  // namespace

int main() {
  ExperimentConfig cfg;
  if (const char* env = std::getenv("FAIG_OUTPUT_DIR")) cfg.out_dir = env;
  else cfg.out_dir = "acceptance_out";

  // Reuse a finished run when its digest matches; otherwise run the pipeline.
  bool have_artifacts = false;
  const std::string manifest = cfg.out_dir + "/manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream is(manifest);
    nlohmann::json j;
    is >> j;
    have_artifacts = (j.value("config_digest", "") == config_digest(cfg));
    for (uint64_t seed : cfg.seeds)
      have_artifacts = have_artifacts && fs::exists(seed_paths(cfg, seed).retrain_report) &&
                       fs::exists(seed_paths(cfg, seed).mask_report);
    have_artifacts =
        have_artifacts && fs::exists(seed_paths(cfg, cfg.seeds.front()).dir + "/thresholds.json");
  }
  if (!have_artifacts) {
    std::printf("running the desk-scale pipeline into %s (config %s)...\n", cfg.out_dir.c_str(),
                config_digest(cfg).c_str());
    std::fflush(stdout);
    run_reproduce_all(cfg);
  } else {
    std::printf("reusing pipeline artifacts in %s\n", cfg.out_dir.c_str());
  }

  const SeedPaths p0 = seed_paths(cfg, cfg.seeds.front());
  const ModelParams baseline = load_stage_checkpoint(cfg, p0.baseline_ckpt, "train-baseline");
  const ModelParams target = load_stage_checkpoint(cfg, p0.target_ckpt, "finetune-target");

  criterion_completeness(cfg, target, baseline);
  criterion_zero_path(cfg, target);
  criterion_grad_check();
  criterion_mask_selectivity(cfg);
  criterion_method_ordering(cfg);
  criterion_retrain(cfg, baseline);
  criterion_prediction(cfg);
  criterion_no_subtraction(cfg);
  criterion_exact_units(cfg);
  criterion_determinism();

  std::printf("%d of 10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
