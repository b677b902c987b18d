#include "faig/util.hpp"

#include <cstdio>

#include "faig/model.hpp"

namespace faig {

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string digest_params(const ModelParams& params) {
  uint64_t h = fnv1a64(params.spec.arch.data(), params.spec.arch.size());
  const int meta[4] = {params.spec.channels, params.spec.num_blocks, params.spec.scale,
                       params.spec.kernel_size};
  h = fnv1a64(meta, sizeof(meta), h);
  for (const auto& t : params.tensors) {
    h = fnv1a64(t.name.data(), t.name.size(), h);
    h = fnv1a64(t.v.data(), t.v.size() * sizeof(float), h);
  }
  return hex64(h);
}

}  // namespace faig
