#pragma once

#include "faig/degrade.hpp"
#include "faig/tensor.hpp"

namespace faig {

// 10*log10(1/MSE) over all RGB values on the [0,1] scale, capped at 100 dB.
double psnr_rgb(const ImagePatch& a, const ImagePatch& b);

// MSE of forward-difference gradients of the gray (0.299/0.587/0.114)
// versions of the two images; invariant to global brightness shifts.
double gradient_mse(const ImagePatch& a, const ImagePatch& b);

}  // namespace faig
