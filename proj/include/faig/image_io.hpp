#pragma once

#include <string>

#include "faig/tensor.hpp"

namespace faig {

// 8-bit RGB(A) PNG -> 3-channel float in [0,1] (alpha dropped, gray expanded).
Tensor load_png(const std::string& path);

// Saves a 3-channel [0,1] tensor as 8-bit RGB PNG (values clamped, rounded).
void save_png(const std::string& path, const Tensor& img);

}  // namespace faig
