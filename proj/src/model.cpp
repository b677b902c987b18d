#include "faig/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace faig {

std::vector<ConvLayerDesc> conv_layers(const ModelSpec& spec) {
  const int c = spec.channels, k = spec.kernel_size, s = spec.scale;
  std::vector<ConvLayerDesc> layers;
  if (spec.arch == "srcnn9") {
    layers.push_back({"conv1", 3, c, k});
    for (int i = 2; i <= 8; ++i) layers.push_back({"conv" + std::to_string(i), c, c, k});
    layers.push_back({"conv9", c, 3 * s * s, k});
  } else if (spec.arch == "srresnet_nobn") {
    layers.push_back({"head", 3, c, k});
    for (int b = 0; b < spec.num_blocks; ++b) {
      const std::string p = "block" + std::to_string(b);
      layers.push_back({p + ".conv1", c, c, k});
      layers.push_back({p + ".conv2", c, c, k});
    }
    layers.push_back({"trunk", c, c, k});
    layers.push_back({"upsample", c, s > 1 ? c * s * s : c, k});
    layers.push_back({"tail", c, 3, k});
  } else {
    throw std::invalid_argument("unknown arch: " + spec.arch);
  }
  return layers;
}

size_t ModelParams::scalar_count() const {
  size_t n = 0;
  for (const auto& t : tensors) n += t.v.size();
  return n;
}

size_t ModelParams::tensor_offset(size_t i) const {
  size_t off = 0;
  for (size_t j = 0; j < i; ++j) off += tensors[j].v.size();
  return off;
}

int ModelParams::tensor_index(const std::string& name) const {
  for (size_t i = 0; i < tensors.size(); ++i)
    if (tensors[i].name == name) return int(i);
  return -1;
}

bool ModelParams::same_shape(const ModelParams& o) const {
  if (!(spec == o.spec) || tensors.size() != o.tensors.size()) return false;
  for (size_t i = 0; i < tensors.size(); ++i)
    if (tensors[i].name != o.tensors[i].name || tensors[i].shape != o.tensors[i].shape)
      return false;
  return true;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& t : z.tensors) std::fill(t.v.begin(), t.v.end(), 0.0f);
  return z;
}

ModelParams build(const ModelSpec& spec, Rng& rng) {
  if (spec.channels < 1 || spec.num_blocks < 1)
    throw std::invalid_argument("build: channels and num_blocks must be >= 1");
  if (spec.scale != 1 && spec.scale != 2 && spec.scale != 4)
    throw std::invalid_argument("build: scale must be in {1,2,4}");
  ModelParams p;
  p.spec = spec;
  for (const auto& l : conv_layers(spec)) {
    ParamTensor w;
    w.name = l.name + ".weight";
    w.shape = {l.out_ch, l.in_ch, l.k, l.k};
    w.v.resize(size_t(l.out_ch) * l.in_ch * l.k * l.k);
    const double std_dev = std::sqrt(2.0 / (double(l.in_ch) * l.k * l.k));
    for (float& v : w.v) v = float(rng.normal() * std_dev);
    p.tensors.push_back(std::move(w));

    ParamTensor b;
    b.name = l.name + ".bias";
    b.shape = {l.out_ch};
    b.v.assign(size_t(l.out_ch), 0.0f);
    p.tensors.push_back(std::move(b));
  }
  return p;
}

std::vector<FilterId> enumerate_filters(const ModelSpec& spec) {
  std::vector<FilterId> out;
  int64_t flat = 0;
  for (const auto& l : conv_layers(spec))
    for (int oc = 0; oc < l.out_ch; ++oc)
      for (int ic = 0; ic < l.in_ch; ++ic) out.push_back({l.name, oc, ic, flat++});
  return out;
}

int64_t filter_count(const ModelSpec& spec) {
  int64_t n = 0;
  for (const auto& l : conv_layers(spec)) n += int64_t(l.out_ch) * l.in_ch;
  return n;
}

FilterId filter_from_flat(const ModelSpec& spec, int64_t flat_index) {
  int64_t first = 0;
  for (const auto& l : conv_layers(spec)) {
    const int64_t n = int64_t(l.out_ch) * l.in_ch;
    if (flat_index < first + n) {
      const int64_t local = flat_index - first;
      return {l.name, int(local / l.in_ch), int(local % l.in_ch), flat_index};
    }
    first += n;
  }
  throw std::invalid_argument("filter_from_flat: index out of range");
}

FilterScalarMap::FilterScalarMap(const ModelParams& params) {
  const auto layers = conv_layers(params.spec);
  k2 = params.spec.kernel_size * params.spec.kernel_size;
  size_t off = 0;
  int64_t flat = 0;
  size_t ti = 0;
  for (const auto& l : layers) {
    filter_base_.push_back(off);        // offset of this layer's weight tensor
    layer_first_filter_.push_back(flat);
    flat += int64_t(l.out_ch) * l.in_ch;
    off += params.tensors[ti].v.size();      // weight
    off += params.tensors[ti + 1].v.size();  // bias
    ti += 2;
  }
  total_filters_ = flat;
}

size_t FilterScalarMap::first_scalar(int64_t f) const {
  if (f < 0 || f >= total_filters_) throw std::invalid_argument("filter index out of range");
  const auto it = std::upper_bound(layer_first_filter_.begin(), layer_first_filter_.end(), f);
  const size_t l = size_t(it - layer_first_filter_.begin()) - 1;
  return filter_base_[l] + size_t(f - layer_first_filter_[l]) * k2;
}

// ---- forward / backward ----

namespace {

struct LayerRef {
  const float* W;
  const float* b;
  int in_ch, out_ch, k;
};

std::vector<LayerRef> layer_refs(const ModelParams& p) {
  std::vector<LayerRef> refs;
  const auto layers = conv_layers(p.spec);
  for (size_t i = 0; i < layers.size(); ++i)
    refs.push_back({p.tensors[2 * i].v.data(), p.tensors[2 * i + 1].v.data(), layers[i].in_ch,
                    layers[i].out_ch, layers[i].k});
  return refs;
}

// Activation layout, shared by forward and backward.
//
// srcnn9:        acts[0]=x, acts[i]=post-ReLU of conv_i (i=1..8), acts[9]=conv9
//                output, acts[10]=pixel-shuffled output (scale>1).
// srresnet_nobn: acts[0]=x, acts[1]=relu(head);
//                per block b: acts[2+2b]=relu(conv1), acts[3+2b]=block output;
//                then trunk output, global-skip sum, upsample conv output,
//                post-shuffle ReLU activation.
ImagePatch forward_impl(const ModelParams& p, const ImagePatch& x, Workspace& ws) {
  if (x.c != 3) throw std::invalid_argument("forward: input must be 3-channel");
  const int s = p.spec.scale;
  const auto refs = layer_refs(p);
  auto& acts = ws.acts;
  auto conv = [&](const Tensor& in, const LayerRef& l, Tensor& out) {
    kernels::conv_fwd(in, l.W, l.b, out, l.k, ws.scratch);
  };
  auto ensure = [&](size_t i, int c, int h, int w) -> Tensor& {
    if (acts.size() <= i) acts.resize(i + 1);
    if (acts[i].c != c || acts[i].h != h || acts[i].w != w) acts[i] = Tensor(c, h, w);
    return acts[i];
  };

  if (p.spec.arch == "srcnn9") {
    ensure(0, x.c, x.h, x.w) = x;
    for (size_t i = 0; i < 9; ++i) {
      Tensor& out = ensure(i + 1, refs[i].out_ch, x.h, x.w);
      conv(acts[i], refs[i], out);
      if (i < 8) kernels::relu_fwd(out);
    }
    if (s == 1) return acts[9];
    Tensor& shuffled = ensure(10, 3, x.h * s, x.w * s);
    kernels::pixel_shuffle_fwd(acts[9], shuffled, s);
    return shuffled;
  }

  // srresnet_nobn
  const int B = p.spec.num_blocks, c = p.spec.channels;
  ensure(0, x.c, x.h, x.w) = x;
  Tensor& h0 = ensure(1, c, x.h, x.w);
  conv(acts[0], refs[0], h0);
  kernels::relu_fwd(h0);
  for (int b = 0; b < B; ++b) {
    const Tensor& fin = acts[b == 0 ? 1 : 3 + 2 * (b - 1)];
    Tensor& t = ensure(2 + 2 * b, c, x.h, x.w);
    conv(fin, refs[1 + 2 * b], t);
    kernels::relu_fwd(t);
    Tensor& fout = ensure(3 + 2 * b, c, x.h, x.w);
    conv(t, refs[2 + 2 * b], fout);
    for (size_t i = 0; i < fout.v.size(); ++i) fout.v[i] += fin.v[i];
  }
  const size_t itr = 2 + 2 * size_t(B);
  Tensor& tr = ensure(itr, c, x.h, x.w);
  conv(acts[3 + 2 * (B - 1)], refs[1 + 2 * B], tr);
  Tensor& g0 = ensure(itr + 1, c, x.h, x.w);
  for (size_t i = 0; i < g0.v.size(); ++i) g0.v[i] = tr.v[i] + acts[1].v[i];
  const LayerRef& up = refs[2 + 2 * B];
  Tensor& u = ensure(itr + 2, up.out_ch, x.h, x.w);
  conv(g0, up, u);
  Tensor& pact = ensure(itr + 3, c, x.h * s, x.w * s);
  if (s > 1)
    kernels::pixel_shuffle_fwd(u, pact, s);
  else
    pact = u;
  kernels::relu_fwd(pact);
  ImagePatch out(3, x.h * s, x.w * s);
  kernels::conv_fwd(pact, refs[3 + 2 * B].W, refs[3 + 2 * B].b, out, refs[3 + 2 * B].k,
                    ws.scratch);
  return out;
}

}  // namespace

ImagePatch forward(const ModelParams& params, const ImagePatch& x, Workspace& ws) {
  return forward_impl(params, x, ws);
}

ImagePatch forward(const ModelParams& params, const ImagePatch& x) {
  Workspace ws;
  return forward_impl(params, x, ws);
}

double loss(const ModelParams& params, const PairedSample& sample) {
  const ImagePatch out = forward(params, sample.lr);
  if (!out.same_shape(sample.hr)) throw std::invalid_argument("loss: hr/output shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < out.v.size(); ++i) {
    const double d = double(out.v[i]) - double(sample.hr.v[i]);
    acc += d * d;
  }
  return acc / double(out.v.size());
}

namespace {

// Minimal double-precision mirror of forward_impl (serial, no workspace).
struct Tensor64 {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;
  Tensor64() = default;
  Tensor64(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(size_t(c_) * h_ * w_, 0.0) {}
  double& at(int ch, int y, int x) { return v[(size_t(ch) * h + y) * w + x]; }
  double at(int ch, int y, int x) const { return v[(size_t(ch) * h + y) * w + x]; }
};

Tensor64 conv64(const Tensor64& in, const LayerRef& l) {
  Tensor64 out(l.out_ch, in.h, in.w);
  const int pad = l.k / 2;
  for (int co = 0; co < l.out_ch; ++co)
    for (int y = 0; y < in.h; ++y)
      for (int x = 0; x < in.w; ++x) {
        double acc = double(l.b[co]);
        for (int ci = 0; ci < l.in_ch; ++ci)
          for (int ky = 0; ky < l.k; ++ky)
            for (int kx = 0; kx < l.k; ++kx) {
              const int sy = y + ky - pad, sx = x + kx - pad;
              if (sy < 0 || sy >= in.h || sx < 0 || sx >= in.w) continue;
              acc += double(l.W[((size_t(co) * l.in_ch + ci) * l.k + ky) * l.k + kx]) *
                     in.at(ci, sy, sx);
            }
        out.at(co, y, x) = acc;
      }
  return out;
}

void relu64(Tensor64& t) {
  for (double& v : t.v) v = std::max(v, 0.0);
}

Tensor64 shuffle64(const Tensor64& in, int s) {
  Tensor64 out(in.c / (s * s), in.h * s, in.w * s);
  for (int co = 0; co < out.c; ++co)
    for (int dy = 0; dy < s; ++dy)
      for (int dx = 0; dx < s; ++dx)
        for (int y = 0; y < in.h; ++y)
          for (int x = 0; x < in.w; ++x)
            out.at(co, y * s + dy, x * s + dx) = in.at((co * s + dy) * s + dx, y, x);
  return out;
}

}  // namespace

double loss_fp64(const ModelParams& p, const PairedSample& sample) {
  const int s = p.spec.scale;
  const auto refs = layer_refs(p);
  Tensor64 x(sample.lr.c, sample.lr.h, sample.lr.w);
  for (size_t i = 0; i < x.v.size(); ++i) x.v[i] = double(sample.lr.v[i]);

  Tensor64 out;
  if (p.spec.arch == "srcnn9") {
    Tensor64 cur = std::move(x);
    for (size_t i = 0; i < 9; ++i) {
      cur = conv64(cur, refs[i]);
      if (i < 8) relu64(cur);
    }
    out = (s == 1) ? std::move(cur) : shuffle64(cur, s);
  } else {
    const int B = p.spec.num_blocks;
    Tensor64 h0 = conv64(x, refs[0]);
    relu64(h0);
    Tensor64 cur = h0;
    for (int b = 0; b < B; ++b) {
      Tensor64 t = conv64(cur, refs[1 + 2 * b]);
      relu64(t);
      Tensor64 f = conv64(t, refs[2 + 2 * b]);
      for (size_t i = 0; i < f.v.size(); ++i) f.v[i] += cur.v[i];
      cur = std::move(f);
    }
    Tensor64 tr = conv64(cur, refs[1 + 2 * B]);
    for (size_t i = 0; i < tr.v.size(); ++i) tr.v[i] += h0.v[i];
    Tensor64 u = conv64(tr, refs[2 + 2 * B]);
    Tensor64 pact = (s > 1) ? shuffle64(u, s) : std::move(u);
    relu64(pact);
    out = conv64(pact, refs[3 + 2 * B]);
  }

  if (out.c != sample.hr.c || out.h != sample.hr.h || out.w != sample.hr.w)
    throw std::invalid_argument("loss_fp64: hr/output shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < out.v.size(); ++i) {
    const double d = out.v[i] - double(sample.hr.v[i]);
    acc += d * d;
  }
  return acc / double(out.v.size());
}

double grad_params_accumulate(const ModelParams& p, const PairedSample& sample, ModelParams& grad,
                              Workspace& ws) {
  const ImagePatch out = forward_impl(p, sample.lr, ws);
  if (!out.same_shape(sample.hr))
    throw std::invalid_argument("grad_params: hr/output shape mismatch");

  const size_t n = out.v.size();
  double loss_acc = 0.0;
  Tensor gout(out.c, out.h, out.w);
  for (size_t i = 0; i < n; ++i) {
    const double d = double(out.v[i]) - double(sample.hr.v[i]);
    loss_acc += d * d;
    gout.v[i] = float(2.0 * d / double(n));
  }

  const auto refs = layer_refs(p);
  const int s = p.spec.scale;
  auto& acts = ws.acts;
  auto gW = [&](size_t li) { return grad.tensors[2 * li].v.data(); };
  auto gB = [&](size_t li) { return grad.tensors[2 * li + 1].v.data(); };
  auto bwd = [&](size_t li, const Tensor& in, const Tensor& go, Tensor* gin) {
    kernels::conv_bwd(in, refs[li].W, go, gin, gW(li), gB(li), refs[li].k, ws.scratch);
  };

  if (p.spec.arch == "srcnn9") {
    Tensor g = std::move(gout);
    if (s > 1) {
      Tensor gu(refs[8].out_ch, sample.lr.h, sample.lr.w);
      kernels::pixel_shuffle_bwd(g, gu, s);
      g = std::move(gu);
    }
    for (int i = 8; i >= 0; --i) {
      if (i < 8) kernels::relu_bwd(acts[i + 1], g);
      if (i == 0) {
        bwd(0, acts[0], g, nullptr);
      } else {
        Tensor gin(refs[i].in_ch, sample.lr.h, sample.lr.w);
        bwd(size_t(i), acts[i], g, &gin);
        g = std::move(gin);
      }
    }
    return loss_acc / double(n);
  }

  // srresnet_nobn
  const int B = p.spec.num_blocks, c = p.spec.channels;
  const int h = sample.lr.h, w = sample.lr.w;
  const size_t itr = 2 + 2 * size_t(B);

  Tensor gp(c, h * s, w * s);
  bwd(3 + 2 * size_t(B), acts[itr + 3], gout, &gp);  // tail
  kernels::relu_bwd(acts[itr + 3], gp);
  Tensor gu(refs[2 + 2 * B].out_ch, h, w);
  if (s > 1)
    kernels::pixel_shuffle_bwd(gp, gu, s);
  else
    gu = std::move(gp);
  Tensor gg0(c, h, w);
  bwd(2 + 2 * size_t(B), acts[itr + 1], gu, &gg0);  // upsample conv
  // gg0 feeds both the trunk conv and the global skip to h0.
  Tensor gf(c, h, w);
  bwd(1 + 2 * size_t(B), acts[3 + 2 * (B - 1)], gg0, &gf);  // trunk
  Tensor gt(c, h, w), gtmp(c, h, w);
  for (int b = B - 1; b >= 0; --b) {
    const Tensor& fin = acts[b == 0 ? 1 : 3 + 2 * (b - 1)];
    const Tensor& t = acts[2 + 2 * b];
    bwd(2 + 2 * size_t(b), t, gf, &gt);  // conv2
    kernels::relu_bwd(t, gt);
    bwd(1 + 2 * size_t(b), fin, gt, &gtmp);  // conv1
    for (size_t i = 0; i < gf.v.size(); ++i) gf.v[i] += gtmp.v[i];  // additive skip
  }
  for (size_t i = 0; i < gf.v.size(); ++i) gf.v[i] += gg0.v[i];  // global skip into h0
  kernels::relu_bwd(acts[1], gf);
  bwd(0, acts[0], gf, nullptr);  // head
  return loss_acc / double(n);
}

ModelParams grad_params(const ModelParams& params, const PairedSample& sample) {
  ModelParams grad = params.zeros_like();
  Workspace ws;
  grad_params_accumulate(params, sample, grad, ws);
  return grad;
}

// ---- checkpoints ----

namespace {
constexpr char kMagic[8] = {'F', 'A', 'I', 'G', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params, uint64_t seed,
                     const std::string& config_digest) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os.write(kMagic, sizeof(kMagic));
    nlohmann::json manifest = {{"arch", params.spec.arch},
                               {"channels", params.spec.channels},
                               {"num_blocks", params.spec.num_blocks},
                               {"scale", params.spec.scale},
                               {"kernel_size", params.spec.kernel_size},
                               {"seed", seed},
                               {"config_digest", config_digest}};
    const std::string m = manifest.dump();
    write_pod(os, uint32_t(m.size()));
    os.write(m.data(), std::streamsize(m.size()));
    write_pod(os, uint32_t(params.tensors.size()));
    for (const auto& t : params.tensors) {
      write_pod(os, uint32_t(t.name.size()));
      os.write(t.name.data(), std::streamsize(t.name.size()));
      write_pod(os, uint32_t(t.shape.size()));
      for (int d : t.shape) write_pod(os, int32_t(d));
      write_pod(os, uint64_t(t.v.size()));
      os.write(reinterpret_cast<const char*>(t.v.data()),
               std::streamsize(t.v.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("rename failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint magic: " + path);
  const uint32_t mlen = read_pod<uint32_t>(is);
  std::string mstr(mlen, '\0');
  is.read(mstr.data(), mlen);
  const nlohmann::json manifest = nlohmann::json::parse(mstr);

  Checkpoint ck;
  ck.params.spec.arch = manifest.at("arch").get<std::string>();
  ck.params.spec.channels = manifest.at("channels").get<int>();
  ck.params.spec.num_blocks = manifest.at("num_blocks").get<int>();
  ck.params.spec.scale = manifest.at("scale").get<int>();
  ck.params.spec.kernel_size = manifest.at("kernel_size").get<int>();
  ck.seed = manifest.at("seed").get<uint64_t>();
  ck.config_digest = manifest.at("config_digest").get<std::string>();

  const uint32_t nt = read_pod<uint32_t>(is);
  for (uint32_t i = 0; i < nt; ++i) {
    ParamTensor t;
    const uint32_t nl = read_pod<uint32_t>(is);
    t.name.resize(nl);
    is.read(t.name.data(), nl);
    const uint32_t nd = read_pod<uint32_t>(is);
    for (uint32_t d = 0; d < nd; ++d) t.shape.push_back(read_pod<int32_t>(is));
    const uint64_t count = read_pod<uint64_t>(is);
    t.v.resize(count);
    is.read(reinterpret_cast<char*>(t.v.data()), std::streamsize(count * sizeof(float)));
    ck.params.tensors.push_back(std::move(t));
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  return ck;
}

}  // namespace faig
