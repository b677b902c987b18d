#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "faig/conv_kernels.hpp"
#include "faig/degrade.hpp"
#include "faig/rng.hpp"
#include "faig/tensor.hpp"

namespace faig {

struct ModelSpec {
  std::string arch = "srresnet_nobn";  // or "srcnn9"
  int channels = 64;
  int num_blocks = 16;  // srresnet_nobn only
  int scale = 2;
  int kernel_size = 3;

  bool operator==(const ModelSpec&) const = default;
};

// One conv layer of the forward graph, in execution order.
struct ConvLayerDesc {
  std::string name;
  int in_ch = 0;
  int out_ch = 0;
  int k = 3;
};

std::vector<ConvLayerDesc> conv_layers(const ModelSpec& spec);

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> v;
};

// Named parameter tensors (weight then bias per conv layer, in layer order)
// plus a canonical flat index over all scalars.
struct ModelParams {
  ModelSpec spec;
  std::vector<ParamTensor> tensors;

  size_t scalar_count() const;
  // Offset of tensors[i] in the flat scalar order.
  size_t tensor_offset(size_t i) const;
  int tensor_index(const std::string& name) const;  // -1 if absent

  bool same_shape(const ModelParams& o) const;
  // Zeroed copy with identical structure (gradient/accumulator storage).
  ModelParams zeros_like() const;
};

// Kaiming fan-in init for weights, zero biases; deterministic given rng.
ModelParams build(const ModelSpec& spec, Rng& rng);

// ---- Filters ----

// One K x K weight slice (layer, out channel, in channel).
struct FilterId {
  std::string layer;
  int out_ch = 0;
  int in_ch = 0;
  int64_t flat_index = 0;

  bool operator==(const FilterId&) const = default;
};

struct FilterSet {
  std::vector<FilterId> ids;
  double fraction = 0.0;  // |ids| / F
};

std::vector<FilterId> enumerate_filters(const ModelSpec& spec);
int64_t filter_count(const ModelSpec& spec);
FilterId filter_from_flat(const ModelSpec& spec, int64_t flat_index);

// Offsets of a filter's K*K scalars in the ModelParams flat order.
struct FilterScalarMap {
  explicit FilterScalarMap(const ModelParams& params);
  size_t first_scalar(int64_t filter_flat_index) const;  // K*K consecutive scalars
  int k2 = 0;

 private:
  std::vector<size_t> filter_base_;  // per conv layer: flat offset of its weight tensor
  std::vector<int64_t> layer_first_filter_;
  int64_t total_filters_ = 0;
};

// ---- Forward / loss / gradients ----

// Per-call workspace: activation storage plus conv scratch.
struct Workspace {
  std::vector<Tensor> acts;
  kernels::Scratch scratch;
};

ImagePatch forward(const ModelParams& params, const ImagePatch& x);
ImagePatch forward(const ModelParams& params, const ImagePatch& x, Workspace& ws);

double loss(const ModelParams& params, const PairedSample& sample);

// Serial double-precision re-evaluation of forward + MSE. Slow; exists so the
// finite-difference gradient oracle is not drowned by float rounding noise.
double loss_fp64(const ModelParams& params, const PairedSample& sample);

// Exact reverse-mode gradient of the MSE loss w.r.t. every weight and bias,
// accumulated into `grad` (caller zeroes it; this allows batch averaging).
// Returns the loss value.
double grad_params_accumulate(const ModelParams& params, const PairedSample& sample,
                              ModelParams& grad, Workspace& ws);
ModelParams grad_params(const ModelParams& params, const PairedSample& sample);

// ---- Checkpoints ----

// Binary checkpoint: spec + seed + config digest manifest, then raw float32
// little-endian tensors. load(save(p)) == p bit-wise.
void save_checkpoint(const std::string& path, const ModelParams& params, uint64_t seed,
                     const std::string& config_digest);
struct Checkpoint {
  ModelParams params;
  uint64_t seed = 0;
  std::string config_digest;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace faig
