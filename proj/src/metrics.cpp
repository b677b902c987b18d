#include "faig/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace faig {

double psnr_rgb(const ImagePatch& a, const ImagePatch& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr_rgb: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    const double d = double(a.v[i]) - double(b.v[i]);
    acc += d * d;
  }
  const double mse = acc / double(a.v.size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

// Gray-space forward difference between (c0,y0,x0) and (c1,y1,x1), computed
// as the weighted sum of per-channel differences. Differencing before the
// gray weighting makes a global brightness shift cancel exactly.
double gray_diff(const ImagePatch& img, int y1, int x1, int y0, int x0) {
  return 0.299 * (double(img.at(0, y1, x1)) - double(img.at(0, y0, x0))) +
         0.587 * (double(img.at(1, y1, x1)) - double(img.at(1, y0, x0))) +
         0.114 * (double(img.at(2, y1, x1)) - double(img.at(2, y0, x0)));
}

}  // namespace

double gradient_mse(const ImagePatch& a, const ImagePatch& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("gradient_mse: shape mismatch");
  const int h = a.h, w = a.w;
  double acc = 0.0;
  size_t count = 0;
  // Forward differences along x and y, valid region only.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) {
      const double d = gray_diff(a, y, x + 1, y, x) - gray_diff(b, y, x + 1, y, x);
      acc += d * d;
      ++count;
    }
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = gray_diff(a, y + 1, x, y, x) - gray_diff(b, y + 1, x, y, x);
      acc += d * d;
      ++count;
    }
  return count == 0 ? 0.0 : acc / double(count);
}

}  // namespace faig
