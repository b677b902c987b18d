#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace faig {

// Dense CHW float tensor. Images are c=3 with values in [0,1]; feature maps
// use the same layout.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(size_t(c_) * h_ * w_, 0.0f) {}

  size_t size() const { return v.size(); }

  float& at(int ch, int y, int x) { return v[(size_t(ch) * h + y) * w + x]; }
  float at(int ch, int y, int x) const { return v[(size_t(ch) * h + y) * w + x]; }

  float* plane(int ch) { return v.data() + size_t(ch) * h * w; }
  const float* plane(int ch) const { return v.data() + size_t(ch) * h * w; }

  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

  void fill(float x) { std::fill(v.begin(), v.end(), x); }
};

}  // namespace faig
