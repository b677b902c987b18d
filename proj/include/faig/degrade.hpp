#pragma once

#include <string>
#include <vector>

#include "faig/rng.hpp"
#include "faig/tensor.hpp"

namespace faig {

using ImagePatch = Tensor;  // 3-channel, values in [0,1]

// Parameters of the classical degradation model:
// lr = clip( bicubic_down( blur(hr) ) + noise, 0, 1 ).
struct DegradationSpec {
  bool use_blur = false;
  double blur_sigma = 2.0;
  int kernel_size = 21;
  bool use_noise = false;
  double noise_sigma = 0.1;
  int scale = 2;
};

struct PairedSample {
  ImagePatch lr;
  ImagePatch hr;
  DegradationSpec spec;
};

enum class Policy { kBicubicOnly, kBlind, kBlurAlways, kNoiseAlways };

Policy policy_from_string(const std::string& s);
std::string to_string(Policy p);

// Normalized isotropic Gaussian; size must be odd, sigma > 0.
std::vector<double> gaussian_kernel(double sigma, int size);

// 2-D convolution with reflection padding, one kernel for all channels.
ImagePatch conv_reflect_pad(const ImagePatch& img, const std::vector<double>& kernel, int ksize);

// Bicubic (a = -0.5) downsampling with antialias (kernel support widened by
// the scale factor). Dimensions must be divisible by scale.
ImagePatch downsample_bicubic(const ImagePatch& img, int scale);

// Bicubic upsampling by an integer factor; used as the PSNR floor reference.
ImagePatch upsample_bicubic(const ImagePatch& img, int scale);

// Applies the full degradation model. Deterministic given the rng state.
PairedSample degrade(const ImagePatch& hr, const DegradationSpec& spec, Rng& rng);

ImagePatch to_gray(const ImagePatch& img);

// ---- Datasets ----

struct Dataset {
  std::vector<ImagePatch> images;
  std::vector<std::string> ids;  // sorted; reductions iterate in this order

  bool empty() const { return images.empty(); }
  size_t size() const { return images.size(); }
};

// Folder-of-PNGs dataset via a manifest file (one path per line).
Dataset load_manifest(const std::string& manifest_path);

// Procedural images (random gradients + rectangles + sinusoids) so the test
// suite and desk-scale experiments run without external downloads.
Dataset procedural_dataset(int count, int height, int width, uint64_t seed);

struct BatchPolicy {
  Policy policy = Policy::kBlind;
  int patch_size = 128;  // ground-truth crop side
  int scale = 2;
  double blur_sigma = 2.0;
  int kernel_size = 21;
  double noise_sigma = 0.1;
};

// Random GT crops degraded per the policy; blur/noise fire independently with
// probability 0.5 under the blind policy. Images smaller than the patch are
// skipped with a warning.
std::vector<PairedSample> sample_training_batch(const Dataset& dataset, const BatchPolicy& policy,
                                                int batch_size, Rng& rng);

}  // namespace faig
