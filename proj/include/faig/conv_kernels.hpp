#pragma once

#include <vector>

#include "faig/tensor.hpp"

namespace faig::kernels {

// Stride-1 same-size convolution with zero padding k/2, weights [oc][ic][k][k].
// Two implementations share one contract: a plain serial reference used by the
// tests, and the production path (im2col + sgemm, OpenMP for the packing and
// elementwise loops). `use_fast()` switches globally; the benchmark target
// compares the two.

bool& use_fast();

// Scratch buffers reused across calls to avoid per-layer allocation.
struct Scratch {
  std::vector<float> cols;
  std::vector<float> colsg;
};

void conv_fwd_ref(const Tensor& in, const float* W, const float* b, Tensor& out, int k);
// Any of gin/gW/gb may be null. gW/gb are accumulated into.
void conv_bwd_ref(const Tensor& in, const float* W, const Tensor& gout, Tensor* gin, float* gW,
                  float* gb, int k);

void conv_fwd_fast(const Tensor& in, const float* W, const float* b, Tensor& out, int k,
                   Scratch& scratch);
void conv_bwd_fast(const Tensor& in, const float* W, const Tensor& gout, Tensor* gin, float* gW,
                   float* gb, int k, Scratch& scratch);

// Dispatching wrappers.
void conv_fwd(const Tensor& in, const float* W, const float* b, Tensor& out, int k,
              Scratch& scratch);
void conv_bwd(const Tensor& in, const float* W, const Tensor& gout, Tensor* gin, float* gW,
              float* gb, int k, Scratch& scratch);

void relu_fwd(Tensor& t);
// gin = gout where act > 0 (act is the post-ReLU value), in place on gout.
void relu_bwd(const Tensor& act, Tensor& gout);

// [c*s*s, h, w] -> [c, h*s, w*s]; channel c*s*s + dy*s + dx lands at (y*s+dy, x*s+dx).
void pixel_shuffle_fwd(const Tensor& in, Tensor& out, int s);
void pixel_shuffle_bwd(const Tensor& gout, Tensor& gin, int s);

}  // namespace faig::kernels
