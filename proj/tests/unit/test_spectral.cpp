#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sflab/ops.hpp"
#include "sflab/spectral.hpp"

using namespace sflab;
using namespace sflab::spectral;

namespace {

Tensor constant_image(std::int64_t n, std::int64_t hw, float v) { return Tensor(Shape{n, 3, hw, hw}, v); }

Tensor random_image(std::uint64_t seed, Shape shape) {
  Rng rng(seed);
  return oracle::random_tensor(rng, std::move(shape), 0.0f, 1.0f);
}

}  // namespace

TEST_CASE("dct kernel table") {
  const auto table = build_dct_kernels();
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) CHECK(table(0, 0, x, y) == doctest::Approx(0.125).epsilon(1e-15));

  CHECK(std::abs(basis_inner_product(table, 0, 0, 0, 1)) < 1e-12);

  double deviation = 0.0;
  for (int a = 0; a < 64; ++a)
    for (int b = 0; b < 64; ++b) {
      double dot = 0.0;
      for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) dot += table(a / 8, a % 8, x, y) * table(b / 8, b % 8, x, y);
      deviation += std::abs(dot - (a == b ? 1.0 : 0.0));
    }
  CHECK(deviation < 1e-9);

  // Table agrees with the closed-form basis.
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v)
      for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) CHECK(std::abs(table(u, v, x, y) - oracle::dct_basis(u, v, x, y)) < 1e-14);
}

TEST_CASE("zigzag order") {
  const auto order = zigzag_order();
  using P = std::pair<int, int>;
  CHECK(order.frequency(0) == P{0, 0});
  CHECK(order.frequency(63) == P{7, 7});
  const std::vector<P> first{{0, 1}, {1, 0}, {2, 0}, {1, 1}, {0, 2}};
  for (int r = 1; r <= 5; ++r) CHECK(order.frequency(r) == first[static_cast<std::size_t>(r - 1)]);

  const auto walk = oracle::zigzag();
  for (int r = 0; r < 64; ++r) {
    CHECK(order.frequency(r) == walk[static_cast<std::size_t>(r)]);
    const auto [u, v] = order.frequency(r);
    CHECK(order.rank(u, v) == r);
  }
  CHECK(channel_index(0, 2) == 2);
  CHECK(channel_index(5, 1) == 16);
}

TEST_CASE("block forward transform") {
  SUBCASE("constant 1.0 image has only DC energy") {
    const Tensor f = block_dct_forward(constant_image(2, 16, 1.0f));
    CHECK(f.shape() == Shape{2, 192, 2, 2});
    for (std::int64_t n = 0; n < 2; ++n)
      for (std::int64_t c = 0; c < 192; ++c)
        for (std::int64_t h = 0; h < 2; ++h)
          for (std::int64_t w = 0; w < 2; ++w) {
            const float expected = c < 3 ? 4.0f : 0.0f;
            CHECK(std::abs(f.at(n, c, h, w) - expected) < 1e-5f);
          }
  }
  SUBCASE("all-0.5 image is all zero") {
    CHECK(max_abs(block_dct_forward(constant_image(1, 8, 0.5f))) == 0.0f);
  }
  SUBCASE("matches the direct double sum") {
    const Tensor x = random_image(1, Shape{3, 3, 16, 24});
    CHECK(max_abs_diff(block_dct_forward(x), oracle::naive_block_dct(x)) <= 1e-5f);
  }
  SUBCASE("non-divisible extents point at the resize utility") {
    try {
      block_dct_forward(constant_image(1, 12, 0.5f));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("resize") != std::string::npos);
    }
  }
}

TEST_CASE("block inverse transform") {
  SUBCASE("round trip") {
    const Tensor x = random_image(2, Shape{2, 3, 16, 16});
    CHECK(max_abs_diff(block_dct_inverse(block_dct_forward(x)), x) <= 1e-5f);
  }
  SUBCASE("zero coefficients give a constant image at the shift") {
    const Tensor img = block_dct_inverse(Tensor(Shape{1, 192, 2, 3}), 0.25f);
    CHECK(img.shape() == Shape{1, 3, 16, 24});
    for (float v : img.data()) CHECK(v == doctest::Approx(0.25f));
  }
  SUBCASE("single DC coefficient") {
    Tensor f(Shape{1, 192, 2, 2});
    f.at(0, 1, 1, 0) = 1.0f;  // color 1, block row 1, block col 0
    const Tensor img = block_dct_inverse(f);
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t h = 0; h < 16; ++h)
        for (std::int64_t w = 0; w < 16; ++w) {
          const bool inside = c == 1 && h >= 8 && w < 8;
          CHECK(std::abs(img.at(0, c, h, w) - (inside ? 0.625f : 0.5f)) < 1e-6f);
        }
  }
  SUBCASE("clamp") {
    Tensor f(Shape{1, 192, 1, 1});
    f[0] = 100.0f;
    const Tensor img = block_dct_inverse(f, 0.5f, true);
    CHECK(max_abs(img) == 1.0f);
  }
  SUBCASE("linear part is the adjoint of the inverse") {
    const Tensor x = random_image(3, Shape{1, 3, 8, 16});
    Rng rng(4);
    const Tensor g = oracle::random_tensor(rng, Shape{1, 192, 1, 2});
    const Tensor lin = block_dct_linear(x);
    Tensor inv = block_dct_inverse(g, 0.0f);
    double lhs = 0.0, rhs = 0.0;
    for (std::int64_t i = 0; i < g.numel(); ++i) lhs += static_cast<double>(lin[i]) * g[i];
    for (std::int64_t i = 0; i < x.numel(); ++i) rhs += static_cast<double>(x[i]) * inv[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
  }
}

TEST_CASE("sf kernel bank") {
  const auto bank = build_sf_kernel_bank(build_dct_kernels(), zigzag_order());
  const Tensor& w = bank.weights;
  REQUIRE(w.shape() == Shape{192, 3, 8, 8});
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) {
      CHECK(w.at(0, 0, x, y) == doctest::Approx(0.125f));
      CHECK(w.at(0, 1, x, y) == 0.0f);
      CHECK(w.at(0, 2, x, y) == 0.0f);
    }
  for (std::int64_t f = 0; f < 192; ++f) {
    int zeros = 0;
    for (std::int64_t c = 0; c < 3; ++c)
      for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) zeros += w.at(f, c, x, y) == 0.0f;
    // Some basis cells are exactly zero too, so the bound is a floor.
    CHECK(zeros >= 128);
    for (int x = 0; x < 8; ++x)
      for (int y = 0; y < 8; ++y)
        for (std::int64_t c = 0; c < 3; ++c)
          if (c != f % 3) CHECK(w.at(f, c, x, y) == 0.0f);
  }
  CHECK(w.same_values(sf_kernel_bank().weights));

  const Tensor x = random_image(5, Shape{100, 3, 8, 8});
  Tensor shifted = x;
  for (auto& v : shifted.data()) v -= 0.5f;
  CHECK(max_abs_diff(conv2d(shifted, w, 8, 0), block_dct_forward(x)) <= 1e-5f);
}

TEST_CASE("frequency reconstruction") {
  SUBCASE("constant image") {
    const Tensor x = constant_image(1, 16, 0.8f);
    CHECK(max_abs_diff(frequency_reconstruct(x, Reconstruction::kLowFrequency), x) <= 1e-6f);
    const Tensor h = frequency_reconstruct(x, Reconstruction::kHighFrequency);
    for (float v : h.data()) CHECK(v == doctest::Approx(0.5f));
  }
  SUBCASE("LFR + HFR - shift = x before clamping") {
    const Tensor x = random_image(6, Shape{2, 3, 16, 16});
    const Tensor l = frequency_reconstruct(x, Reconstruction::kLowFrequency, 0.5f, false);
    const Tensor h = frequency_reconstruct(x, Reconstruction::kHighFrequency, 0.5f, false);
    float worst = 0.0f;
    for (std::int64_t i = 0; i < x.numel(); ++i) worst = std::max(worst, std::abs(l[i] + h[i] - 0.5f - x[i]));
    CHECK(worst <= 1e-5f);
  }
  SUBCASE("pure (0,2) pattern") {
    Tensor x(Shape{1, 3, 8, 8});
    for (std::int64_t c = 0; c < 3; ++c)
      for (int r = 0; r < 8; ++r)
        for (int q = 0; q < 8; ++q) x.at(0, c, r, q) = 0.5f + static_cast<float>(oracle::dct_basis(0, 2, r, q));
    const Tensor l = frequency_reconstruct(x, Reconstruction::kLowFrequency);
    const Tensor h = frequency_reconstruct(x, Reconstruction::kHighFrequency);
    for (float v : l.data()) CHECK(v == doctest::Approx(0.5f).epsilon(1e-6));
    CHECK(max_abs_diff(h, x) <= 1e-6f);
  }
}

TEST_CASE("max pixel deviation") {
  CHECK(max_pixel_deviation(0.0f) == 0.0f);
  CHECK(max_pixel_deviation(0.02f) == doctest::Approx(2.0 * max_pixel_deviation(0.01f)).epsilon(1e-6));
  // The exhaustive-sum oracle gives about 0.0209 for 0.003.
  CHECK(max_pixel_deviation(0.003f) == doctest::Approx(oracle::exhaustive_pixel_deviation(0.003)).epsilon(1e-6));
  CHECK(max_pixel_deviation(0.003f) == doctest::Approx(0.0209381).epsilon(1e-5));
  CHECK_THROWS_AS(max_pixel_deviation(-1.0f), Error);
}

TEST_CASE("resize to block multiple") {
  const Tensor x = random_image(7, Shape{1, 3, 16, 24});
  CHECK(resize_to_block_multiple(x).same_values(x));

  Tensor odd(Shape{1, 1, 17, 9});
  for (std::int64_t i = 0; i < odd.numel(); ++i) odd[i] = static_cast<float>(i);
  const Tensor r = resize_to_block_multiple(odd);
  CHECK(r.shape() == Shape{1, 1, 16, 8});
  CHECK(r.at(0, 0, 0, 0) == odd.at(0, 0, 0, 0));
  CHECK(r.at(0, 0, 15, 7) == odd.at(0, 0, 16, 8));
  CHECK_THROWS_AS(resize_to_block_multiple(Tensor(Shape{1, 3, 7, 16})), Error);
}
