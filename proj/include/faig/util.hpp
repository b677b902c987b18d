#pragma once

#include <cstdint>
#include <string>

namespace faig {

struct ModelParams;

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(uint64_t v);

// Digest over spec and all parameter bytes; identifies a trained model.
std::string digest_params(const ModelParams& params);

}  // namespace faig
