#include "faig/conv_kernels.hpp"

#include <cblas.h>

#include <cstring>

namespace faig::kernels {

namespace {

struct BlasInit {
  BlasInit() {
    // Threading is handled by our OpenMP loops; a single-threaded BLAS keeps
    // reductions deterministic.
    openblas_set_num_threads(1);
  }
};
const BlasInit blas_init;

}  // namespace

bool& use_fast() {
  static bool flag = true;
  return flag;
}

void conv_fwd_ref(const Tensor& in, const float* W, const float* b, Tensor& out, int k) {
  const int ci = in.c, co = out.c, h = in.h, w = in.w, r = k / 2;
  for (int oc = 0; oc < co; ++oc) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = b ? b[oc] : 0.0;
        for (int ic = 0; ic < ci; ++ic)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = y + ky - r;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = x + kx - r;
              if (ix < 0 || ix >= w) continue;
              acc += double(W[((size_t(oc) * ci + ic) * k + ky) * k + kx]) * in.at(ic, iy, ix);
            }
          }
        out.at(oc, y, x) = float(acc);
      }
  }
}

void conv_bwd_ref(const Tensor& in, const float* W, const Tensor& gout, Tensor* gin, float* gW,
                  float* gb, int k) {
  const int ci = in.c, co = gout.c, h = in.h, w = in.w, r = k / 2;
  if (gin) gin->fill(0.0f);
  for (int oc = 0; oc < co; ++oc) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const float g = gout.at(oc, y, x);
        if (gb) gb[oc] += g;
        for (int ic = 0; ic < ci; ++ic)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = y + ky - r;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = x + kx - r;
              if (ix < 0 || ix >= w) continue;
              const size_t wi = ((size_t(oc) * ci + ic) * k + ky) * k + kx;
              if (gW) gW[wi] += g * in.at(ic, iy, ix);
              if (gin) gin->at(ic, iy, ix) += g * W[wi];
            }
          }
      }
  }
}

namespace {

// cols has shape [ci*k*k, h*w] row-major.
void im2col(const Tensor& in, float* cols, int k) {
  const int ci = in.c, h = in.h, w = in.w, r = k / 2;
  const size_t n = size_t(h) * w;
#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < ci; ++ic) {
    const float* plane = in.plane(ic);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        float* dst = cols + ((size_t(ic) * k + ky) * k + kx) * n;
        const int dy = ky - r, dx = kx - r;
        for (int y = 0; y < h; ++y) {
          float* drow = dst + size_t(y) * w;
          const int iy = y + dy;
          if (iy < 0 || iy >= h) {
            std::memset(drow, 0, sizeof(float) * w);
            continue;
          }
          const float* srow = plane + size_t(iy) * w;
          const int x0 = dx < 0 ? -dx : 0;
          const int x1 = dx > 0 ? w - dx : w;
          if (x0 > 0) std::memset(drow, 0, sizeof(float) * x0);
          if (x1 < w) std::memset(drow + x1, 0, sizeof(float) * (w - x1));
          for (int x = x0; x < x1; ++x) drow[x] = srow[x + dx];
        }
      }
  }
}

// Transpose of im2col: accumulate cols back into the image.
void col2im(const float* cols, Tensor& out, int k) {
  const int ci = out.c, h = out.h, w = out.w, r = k / 2;
  const size_t n = size_t(h) * w;
  out.fill(0.0f);
#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < ci; ++ic) {
    float* plane = out.plane(ic);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const float* src = cols + ((size_t(ic) * k + ky) * k + kx) * n;
        const int dy = ky - r, dx = kx - r;
        for (int y = 0; y < h; ++y) {
          const int iy = y + dy;
          if (iy < 0 || iy >= h) continue;
          float* drow = plane + size_t(iy) * w;
          const float* srow = src + size_t(y) * w;
          const int x0 = dx < 0 ? -dx : 0;
          const int x1 = dx > 0 ? w - dx : w;
          for (int x = x0; x < x1; ++x) drow[x + dx] += srow[x];
        }
      }
  }
}

}  // namespace

void conv_fwd_fast(const Tensor& in, const float* W, const float* b, Tensor& out, int k,
                   Scratch& scratch) {
  const int ci = in.c, co = out.c, h = in.h, w = in.w;
  const size_t n = size_t(h) * w, kk = size_t(ci) * k * k;
  scratch.cols.resize(kk * n);
  im2col(in, scratch.cols.data(), k);
  // out[co x n] = W[co x kk] * cols[kk x n]
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, co, int(n), int(kk), 1.0f, W, int(kk),
              scratch.cols.data(), int(n), 0.0f, out.v.data(), int(n));
  if (b) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < co; ++oc) {
      float* plane = out.plane(oc);
      const float bias = b[oc];
      for (size_t i = 0; i < n; ++i) plane[i] += bias;
    }
  }
}

void conv_bwd_fast(const Tensor& in, const float* W, const Tensor& gout, Tensor* gin, float* gW,
                   float* gb, int k, Scratch& scratch) {
  const int ci = in.c, co = gout.c, h = in.h, w = in.w;
  const size_t n = size_t(h) * w, kk = size_t(ci) * k * k;
  if (gW) {
    scratch.cols.resize(kk * n);
    im2col(in, scratch.cols.data(), k);
    // gW[co x kk] += gout[co x n] * cols[kk x n]^T
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, co, int(kk), int(n), 1.0f, gout.v.data(),
                int(n), scratch.cols.data(), int(n), 1.0f, gW, int(kk));
  }
  if (gb) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < co; ++oc) {
      const float* plane = gout.plane(oc);
      double acc = 0.0;
      for (size_t i = 0; i < n; ++i) acc += plane[i];
      gb[oc] += float(acc);
    }
  }
  if (gin) {
    scratch.colsg.resize(kk * n);
    // colsg[kk x n] = W^T[kk x co] * gout[co x n]
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, int(kk), int(n), co, 1.0f, W, int(kk),
                gout.v.data(), int(n), 0.0f, scratch.colsg.data(), int(n));
    col2im(scratch.colsg.data(), *gin, k);
  }
}

void conv_fwd(const Tensor& in, const float* W, const float* b, Tensor& out, int k,
              Scratch& scratch) {
  if (use_fast())
    conv_fwd_fast(in, W, b, out, k, scratch);
  else
    conv_fwd_ref(in, W, b, out, k);
}

void conv_bwd(const Tensor& in, const float* W, const Tensor& gout, Tensor* gin, float* gW,
              float* gb, int k, Scratch& scratch) {
  if (use_fast())
    conv_bwd_fast(in, W, gout, gin, gW, gb, k, scratch);
  else
    conv_bwd_ref(in, W, gout, gin, gW, gb, k);
}

void relu_fwd(Tensor& t) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < ptrdiff_t(t.v.size()); ++i)
    if (t.v[i] < 0.0f) t.v[i] = 0.0f;
}

void relu_bwd(const Tensor& act, Tensor& gout) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < ptrdiff_t(gout.v.size()); ++i)
    if (act.v[i] <= 0.0f) gout.v[i] = 0.0f;
}

void pixel_shuffle_fwd(const Tensor& in, Tensor& out, int s) {
  const int co = in.c / (s * s), h = in.h, w = in.w;
#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < co; ++oc)
    for (int dy = 0; dy < s; ++dy)
      for (int dx = 0; dx < s; ++dx) {
        const float* src = in.plane((oc * s + dy) * s + dx);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) out.at(oc, y * s + dy, x * s + dx) = src[size_t(y) * w + x];
      }
}

void pixel_shuffle_bwd(const Tensor& gout, Tensor& gin, int s) {
  const int ci = gin.c / (s * s) * (s * s);  // full channels
  const int co = ci / (s * s), h = gin.h, w = gin.w;
#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < co; ++oc)
    for (int dy = 0; dy < s; ++dy)
      for (int dx = 0; dx < s; ++dx) {
        float* dst = gin.plane((oc * s + dy) * s + dx);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) dst[size_t(y) * w + x] = gout.at(oc, y * s + dy, x * s + dx);
      }
}

}  // namespace faig::kernels
