#include <tuple>
#include <vector>

#include "doctest.h"
#include "faig/conv_kernels.hpp"
#include "faig/rng.hpp"

using namespace faig;
using namespace faig::kernels;

namespace {

Tensor random_tensor(int c, int h, int w, uint64_t seed) {
  Tensor t(c, h, w);
  Rng rng(seed);
  for (float& v : t.v) v = float(rng.normal());
  return t;
}

std::vector<float> random_vec(size_t n, uint64_t seed) {
  std::vector<float> v(n);
  Rng rng(seed);
  for (float& x : v) x = float(rng.normal() * 0.2);
  return v;
}

}  // namespace

TEST_CASE("reference conv matches a frozen hand case") {
  // All-ones 1x2x2 input, all-ones 3x3 kernel, zero padding 1: every output
  // window covers exactly the four input pixels, so out = 4 + bias.
  Tensor in(1, 2, 2);
  in.fill(1.0f);
  std::vector<float> W(9, 1.0f);
  std::vector<float> b = {0.5f};
  Tensor out(1, 2, 2);
  conv_fwd_ref(in, W.data(), b.data(), out, 3);
  for (float v : out.v) CHECK(v == doctest::Approx(4.5f));
}

TEST_CASE("fast conv forward matches the serial reference") {
  for (auto [ci, co, h, w] : {std::tuple{1, 4, 5, 7}, {3, 8, 12, 12}, {8, 3, 9, 16}}) {
    const Tensor in = random_tensor(ci, h, w, uint64_t(ci * 100 + co));
    const auto W = random_vec(size_t(co) * ci * 9, 7);
    const auto b = random_vec(size_t(co), 8);
    Tensor ref(co, h, w), fast(co, h, w);
    Scratch scratch;
    conv_fwd_ref(in, W.data(), b.data(), ref, 3);
    conv_fwd_fast(in, W.data(), b.data(), fast, 3, scratch);
    for (size_t i = 0; i < ref.v.size(); ++i)
      CHECK(double(fast.v[i]) == doctest::Approx(double(ref.v[i])).epsilon(1e-4));
  }
}

TEST_CASE("fast conv backward matches the serial reference") {
  const int ci = 5, co = 6, h = 10, w = 11;
  const Tensor in = random_tensor(ci, h, w, 21);
  const auto W = random_vec(size_t(co) * ci * 9, 22);
  const Tensor gout = random_tensor(co, h, w, 23);

  Tensor gin_ref(ci, h, w), gin_fast(ci, h, w);
  std::vector<float> gW_ref(W.size(), 0.0f), gW_fast(W.size(), 0.0f);
  std::vector<float> gb_ref(co, 0.0f), gb_fast(co, 0.0f);
  Scratch scratch;
  conv_bwd_ref(in, W.data(), gout, &gin_ref, gW_ref.data(), gb_ref.data(), 3);
  conv_bwd_fast(in, W.data(), gout, &gin_fast, gW_fast.data(), gb_fast.data(), 3, scratch);

  for (size_t i = 0; i < gin_ref.v.size(); ++i)
    CHECK(double(gin_fast.v[i]) == doctest::Approx(double(gin_ref.v[i])).epsilon(1e-3));
  for (size_t i = 0; i < gW_ref.size(); ++i)
    CHECK(double(gW_fast[i]) == doctest::Approx(double(gW_ref[i])).epsilon(1e-3));
  for (size_t i = 0; i < gb_ref.size(); ++i)
    CHECK(double(gb_fast[i]) == doctest::Approx(double(gb_ref[i])).epsilon(1e-3));
}

TEST_CASE("conv backward is the adjoint of forward") {
  // <conv(x), y> == <x, conv_bwd_input(y)> for zero bias.
  const int ci = 3, co = 4, h = 8, w = 8;
  const Tensor x = random_tensor(ci, h, w, 31);
  const auto W = random_vec(size_t(co) * ci * 9, 32);
  const std::vector<float> b(size_t(co), 0.0f);
  const Tensor y = random_tensor(co, h, w, 33);

  Tensor fx(co, h, w);
  conv_fwd_ref(x, W.data(), b.data(), fx, 3);
  Tensor bty(ci, h, w);
  conv_bwd_ref(x, W.data(), y, &bty, nullptr, nullptr, 3);

  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < fx.v.size(); ++i) lhs += double(fx.v[i]) * double(y.v[i]);
  for (size_t i = 0; i < x.v.size(); ++i) rhs += double(x.v[i]) * double(bty.v[i]);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-4));
}

TEST_CASE("pixel shuffle places channels at the documented offsets") {
  // c*s*s + dy*s + dx -> (y*s+dy, x*s+dx)
  Tensor in(4, 1, 1);
  in.v = {1.0f, 2.0f, 3.0f, 4.0f};
  Tensor out(1, 2, 2);
  pixel_shuffle_fwd(in, out, 2);
  CHECK(out.at(0, 0, 0) == 1.0f);
  CHECK(out.at(0, 0, 1) == 2.0f);
  CHECK(out.at(0, 1, 0) == 3.0f);
  CHECK(out.at(0, 1, 1) == 4.0f);
}

TEST_CASE("pixel shuffle backward inverts the forward permutation") {
  const Tensor in = random_tensor(8, 3, 5, 41);
  Tensor out(2, 6, 10);
  pixel_shuffle_fwd(in, out, 2);
  Tensor back(8, 3, 5);
  pixel_shuffle_bwd(out, back, 2);
  CHECK(back.v == in.v);
}

TEST_CASE("relu forward and backward share the mask") {
  Tensor t(1, 1, 4);
  t.v = {-1.0f, 0.0f, 0.5f, 2.0f};
  relu_fwd(t);
  CHECK(t.v == std::vector<float>{0.0f, 0.0f, 0.5f, 2.0f});
  Tensor g(1, 1, 4);
  g.v = {1.0f, 1.0f, 1.0f, 1.0f};
  relu_bwd(t, g);
  CHECK(g.v == std::vector<float>{0.0f, 0.0f, 1.0f, 1.0f});
}
