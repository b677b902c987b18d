#include "faig/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "faig/image_io.hpp"

namespace faig {

Policy policy_from_string(const std::string& s) {
  if (s == "bicubic" || s == "bicubic-only") return Policy::kBicubicOnly;
  if (s == "blind") return Policy::kBlind;
  if (s == "blur-always") return Policy::kBlurAlways;
  if (s == "noise-always") return Policy::kNoiseAlways;
  throw std::invalid_argument("unknown policy: " + s);
}

std::string to_string(Policy p) {
  switch (p) {
    case Policy::kBicubicOnly: return "bicubic-only";
    case Policy::kBlind: return "blind";
    case Policy::kBlurAlways: return "blur-always";
    case Policy::kNoiseAlways: return "noise-always";
  }
  return "?";
}

std::vector<double> gaussian_kernel(double sigma, int size) {
  if (sigma <= 0.0) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("gaussian_kernel: size must be odd");
  const int r = size / 2;
  std::vector<double> k(size_t(size) * size);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    for (int j = -r; j <= r; ++j) {
      const double v = std::exp(-(double(i) * i + double(j) * j) / (2.0 * sigma * sigma));
      k[size_t(i + r) * size + (j + r)] = v;
      sum += v;
    }
  }
  for (double& v : k) v /= sum;
  return k;
}

namespace {

std::vector<double> gaussian_kernel_1d(double sigma, int size) {
  const int r = size / 2;
  std::vector<double> k(size);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-double(i) * i / (2.0 * sigma * sigma));
    sum += k[i + r];
  }
  for (double& v : k) v /= sum;
  return k;
}

int reflect_idx(int i, int n) {
  // reflect-101: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

// Keys cubic, a = -0.5.
double cubic(double t) {
  const double a = -0.5;
  t = std::fabs(t);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

// Resampling weights for one axis: per output index, the first input tap and
// normalized weights. Taps outside the image clamp to the edge.
struct AxisTaps {
  std::vector<int> first;        // first input index per output index
  std::vector<double> weights;   // taps_per * out_n
  int taps = 0;
};

AxisTaps bicubic_axis(int in_n, int out_n, double scale_ratio /* in/out */) {
  // Antialias: widen the kernel by the ratio when minifying.
  const double width = std::max(scale_ratio, 1.0);
  const int taps = int(std::ceil(4.0 * width)) + 1;
  AxisTaps t;
  t.taps = taps;
  t.first.resize(out_n);
  t.weights.assign(size_t(out_n) * taps, 0.0);
  for (int o = 0; o < out_n; ++o) {
    const double center = (o + 0.5) * scale_ratio - 0.5;
    const int first = int(std::floor(center - 2.0 * width)) + 1;
    t.first[o] = first;
    double sum = 0.0;
    for (int k = 0; k < taps; ++k) {
      const double wv = cubic((first + k - center) / width) / width;
      t.weights[size_t(o) * taps + k] = wv;
      sum += wv;
    }
    for (int k = 0; k < taps; ++k) t.weights[size_t(o) * taps + k] /= sum;
  }
  return t;
}

ImagePatch resample(const ImagePatch& img, int out_h, int out_w) {
  const AxisTaps ty = bicubic_axis(img.h, out_h, double(img.h) / out_h);
  const AxisTaps tx = bicubic_axis(img.w, out_w, double(img.w) / out_w);
  // Horizontal pass then vertical pass, double accumulators.
  std::vector<double> tmp(size_t(img.c) * img.h * out_w, 0.0);
  for (int ch = 0; ch < img.c; ++ch) {
    const float* plane = img.plane(ch);
    for (int y = 0; y < img.h; ++y) {
      const float* row = plane + size_t(y) * img.w;
      double* trow = tmp.data() + (size_t(ch) * img.h + y) * out_w;
      for (int x = 0; x < out_w; ++x) {
        double acc = 0.0;
        const double* wv = tx.weights.data() + size_t(x) * tx.taps;
        for (int k = 0; k < tx.taps; ++k) {
          const int ix = std::clamp(tx.first[x] + k, 0, img.w - 1);
          acc += wv[k] * row[ix];
        }
        trow[x] = acc;
      }
    }
  }
  ImagePatch out(img.c, out_h, out_w);
  for (int ch = 0; ch < img.c; ++ch) {
    for (int y = 0; y < out_h; ++y) {
      const double* wv = ty.weights.data() + size_t(y) * ty.taps;
      for (int x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (int k = 0; k < ty.taps; ++k) {
          const int iy = std::clamp(ty.first[y] + k, 0, img.h - 1);
          acc += wv[k] * tmp[(size_t(ch) * img.h + iy) * out_w + x];
        }
        out.at(ch, y, x) = float(acc);
      }
    }
  }
  return out;
}

ImagePatch blur_separable(const ImagePatch& img, double sigma, int ksize) {
  const std::vector<double> k1 = gaussian_kernel_1d(sigma, ksize);
  const int r = ksize / 2;
  ImagePatch tmp(img.c, img.h, img.w), out(img.c, img.h, img.w);
  for (int ch = 0; ch < img.c; ++ch) {
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        double acc = 0.0;
        for (int t = -r; t <= r; ++t) acc += k1[t + r] * img.at(ch, y, reflect_idx(x + t, img.w));
        tmp.at(ch, y, x) = float(acc);
      }
    }
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        double acc = 0.0;
        for (int t = -r; t <= r; ++t) acc += k1[t + r] * tmp.at(ch, reflect_idx(y + t, img.h), x);
        out.at(ch, y, x) = float(acc);
      }
    }
  }
  return out;
}

}  // namespace

ImagePatch conv_reflect_pad(const ImagePatch& img, const std::vector<double>& kernel, int ksize) {
  if (ksize % 2 == 0 || size_t(ksize) * ksize != kernel.size())
    throw std::invalid_argument("conv_reflect_pad: kernel must be odd and square");
  const int r = ksize / 2;
  ImagePatch out(img.c, img.h, img.w);
  for (int ch = 0; ch < img.c; ++ch) {
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const int iy = reflect_idx(y + i, img.h);
          for (int j = -r; j <= r; ++j) {
            const int ix = reflect_idx(x + j, img.w);
            acc += kernel[size_t(i + r) * ksize + (j + r)] * img.at(ch, iy, ix);
          }
        }
        out.at(ch, y, x) = float(acc);
      }
    }
  }
  return out;
}

ImagePatch downsample_bicubic(const ImagePatch& img, int scale) {
  if (scale < 1) throw std::invalid_argument("downsample_bicubic: scale must be >= 1");
  if (img.h % scale != 0 || img.w % scale != 0)
    throw std::invalid_argument("downsample_bicubic: dimensions not divisible by scale");
  if (scale == 1) return img;
  return resample(img, img.h / scale, img.w / scale);
}

ImagePatch upsample_bicubic(const ImagePatch& img, int scale) {
  if (scale < 1) throw std::invalid_argument("upsample_bicubic: scale must be >= 1");
  if (scale == 1) return img;
  return resample(img, img.h * scale, img.w * scale);
}

PairedSample degrade(const ImagePatch& hr, const DegradationSpec& spec, Rng& rng) {
  if (hr.h % spec.scale != 0 || hr.w % spec.scale != 0)
    throw std::invalid_argument("degrade: hr dimensions not divisible by scale");
  if (spec.noise_sigma < 0.0) throw std::invalid_argument("degrade: noise_sigma must be >= 0");
  if (spec.use_blur) {
    if (spec.kernel_size % 2 == 0 || spec.kernel_size < 3 * int(std::ceil(spec.blur_sigma)))
      throw std::invalid_argument("degrade: kernel_size must be odd and >= 3*ceil(sigma)");
  }

  ImagePatch cur = hr;
  if (spec.use_blur) cur = blur_separable(cur, spec.blur_sigma, spec.kernel_size);
  if (spec.scale > 1) cur = downsample_bicubic(cur, spec.scale);
  if (spec.use_noise) {
    for (float& v : cur.v) v += float(spec.noise_sigma * rng.normal());
  }
  for (float& v : cur.v) v = std::clamp(v, 0.0f, 1.0f);

  PairedSample s;
  s.lr = std::move(cur);
  s.hr = hr;
  s.spec = spec;
  return s;
}

ImagePatch to_gray(const ImagePatch& img) {
  ImagePatch out(1, img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      out.at(0, y, x) = 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x);
  return out;
}

Dataset load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path);
  Dataset d;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    d.images.push_back(load_png(line));
    d.ids.push_back(line);
  }
  if (d.empty()) throw std::runtime_error("manifest lists no images: " + manifest_path);
  return d;
}

Dataset procedural_dataset(int count, int height, int width, uint64_t seed) {
  Dataset d;
  Rng root(seed);
  for (int n = 0; n < count; ++n) {
    Rng rng = root.fork(uint64_t(n));
    ImagePatch img(3, height, width);
    // Base linear gradient per channel.
    for (int ch = 0; ch < 3; ++ch) {
      const double base = 0.2 + 0.6 * rng.uniform();
      const double gx = (rng.uniform() - 0.5) * 0.8 / width;
      const double gy = (rng.uniform() - 0.5) * 0.8 / height;
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) img.at(ch, y, x) = float(base + gx * x + gy * y);
    }
    // Random rectangles.
    const int rects = 4 + int(rng.uniform_int(5));
    for (int r = 0; r < rects; ++r) {
      const int rw = 4 + int(rng.uniform_int(uint64_t(width / 2)));
      const int rh = 4 + int(rng.uniform_int(uint64_t(height / 2)));
      const int x0 = int(rng.uniform_int(uint64_t(width - rw)));
      const int y0 = int(rng.uniform_int(uint64_t(height - rh)));
      float col[3];
      for (float& cch : col) cch = float(rng.uniform());
      const double alpha = 0.4 + 0.6 * rng.uniform();
      for (int ch = 0; ch < 3; ++ch)
        for (int y = y0; y < y0 + rh; ++y)
          for (int x = x0; x < x0 + rw; ++x)
            img.at(ch, y, x) = float((1.0 - alpha) * img.at(ch, y, x) + alpha * col[ch]);
    }
    // High-contrast bars: edges with broad spectral content that blurring
    // visibly softens, giving a deblurring network something to recover.
    const int bars = 2 + int(rng.uniform_int(4));
    for (int b = 0; b < bars; ++b) {
      const bool horiz = rng.uniform() < 0.5;
      const int thick = 2 + int(rng.uniform_int(3));
      const int span = horiz ? height : width;
      const int p0 = int(rng.uniform_int(uint64_t(span - thick)));
      float col[3];
      for (float& cch : col) cch = rng.uniform() < 0.5 ? 0.05f + 0.1f * float(rng.uniform())
                                                       : 0.85f + 0.1f * float(rng.uniform());
      for (int ch = 0; ch < 3; ++ch)
        for (int t = 0; t < thick; ++t)
          for (int q = 0; q < (horiz ? width : height); ++q) {
            float& px = horiz ? img.at(ch, p0 + t, q) : img.at(ch, q, p0 + t);
            px = 0.25f * px + 0.75f * col[ch];
          }
    }
    // Mid-frequency sinusoids carry most of the texture energy: components in
    // this band are strongly attenuated by the blur kernel yet still survive
    // antialiased downsampling, so deblurring them is both necessary and
    // well-conditioned.
    const int waves = 5 + int(rng.uniform_int(4));
    for (int s = 0; s < waves; ++s) {
      const double freq = 0.04 + 0.12 * rng.uniform();
      const double angle = rng.uniform() * 2.0 * 3.14159265358979323846;
      const double fx = freq * std::cos(angle);
      const double fy = freq * std::sin(angle);
      const double phase = rng.uniform() * 2.0 * 3.14159265358979323846;
      const double amp = 0.10 + 0.20 * rng.uniform();
      const int ch = int(rng.uniform_int(3));
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          img.at(ch, y, x) +=
              float(amp * std::sin(2.0 * 3.14159265358979323846 * (fx * x + fy * y) + phase));
    }
    // Band-limit the ground truth below the post-downsample Nyquist rate so
    // that clean upsampling is near-lossless: the interesting reconstruction
    // work is then removing the degradations, not inventing lost detail.
    img = blur_separable(img, 1.0, 7);
    for (float& v : img.v) v = std::clamp(v, 0.0f, 1.0f);
    d.images.push_back(std::move(img));
    char id[32];
    std::snprintf(id, sizeof(id), "proc_%04d", n);
    d.ids.push_back(id);
  }
  return d;
}

std::vector<PairedSample> sample_training_batch(const Dataset& dataset, const BatchPolicy& policy,
                                                int batch_size, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("sample_training_batch: empty dataset");
  std::vector<size_t> usable;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const ImagePatch& img = dataset.images[i];
    if (img.h >= policy.patch_size && img.w >= policy.patch_size)
      usable.push_back(i);
    else
      std::fprintf(stderr, "warning: image %s smaller than patch size %d, skipped\n",
                   dataset.ids[i].c_str(), policy.patch_size);
  }
  if (usable.empty()) throw std::runtime_error("sample_training_batch: no usable images");

  std::vector<PairedSample> batch;
  batch.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const ImagePatch& img = dataset.images[usable[rng.uniform_int(usable.size())]];
    const int y0 = int(rng.uniform_int(uint64_t(img.h - policy.patch_size + 1)));
    const int x0 = int(rng.uniform_int(uint64_t(img.w - policy.patch_size + 1)));
    ImagePatch crop(3, policy.patch_size, policy.patch_size);
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < policy.patch_size; ++y)
        for (int x = 0; x < policy.patch_size; ++x) crop.at(ch, y, x) = img.at(ch, y0 + y, x0 + x);

    DegradationSpec spec;
    spec.scale = policy.scale;
    spec.blur_sigma = policy.blur_sigma;
    spec.kernel_size = policy.kernel_size;
    spec.noise_sigma = policy.noise_sigma;
    switch (policy.policy) {
      case Policy::kBicubicOnly:
        break;
      case Policy::kBlind:
        spec.use_blur = rng.bernoulli(0.5);
        spec.use_noise = rng.bernoulli(0.5);
        break;
      case Policy::kBlurAlways:
        spec.use_blur = true;
        break;
      case Policy::kNoiseAlways:
        spec.use_noise = true;
        break;
    }
    batch.push_back(degrade(crop, spec, rng));
  }
  return batch;
}

}  // namespace faig
