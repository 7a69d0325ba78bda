#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sflab/autodiff.hpp"
#include "sflab/ops.hpp"
#include "sflab/optim.hpp"
#include "sflab/parallel.hpp"
#include "sflab/rng.hpp"
#include "sflab/spectral.hpp"
#include "sflab/tensor.hpp"

using namespace sflab;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t(Shape{2, 3, 4, 5}, 1.5f);
  CHECK(t.numel() == 120);
  CHECK(t.rank() == 4);
  CHECK(t.dim(2) == 4);
  t.at(1, 2, 3, 4) = 7.0f;
  CHECK(t[119] == 7.0f);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>(3)), Error);
  CHECK_THROWS_AS(t.reshaped(Shape{7, 7}), Error);

  const Tensor s = t.slice0(1, 2);
  CHECK(s.shape() == Shape{1, 3, 4, 5});
  CHECK(s[59] == 7.0f);
  const std::vector<std::int64_t> idx{1, 0};
  const Tensor g = t.gather0(idx);
  CHECK(g[59] == 7.0f);
  CHECK(g[119] == 1.5f);
}

TEST_CASE("rng streams are reproducible and split independently") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  Rng child = c.split();
  CHECK(child.next_u64() != Rng(42).next_u64());

  Rng r(7);
  double mean = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    mean += z;
    sq += z * z;
  }
  mean /= n;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);

  auto perm = Rng(3).permutation(50);
  std::sort(perm.begin(), perm.end());
  for (std::int64_t i = 0; i < 50; ++i) CHECK(perm[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("conv2d basics") {
  SUBCASE("zero input gives zero output of the contracted size") {
    Rng rng(1);
    const Tensor k = oracle::random_tensor(rng, Shape{4, 3, 3, 3});
    const Tensor out = conv2d(Tensor(Shape{2, 3, 9, 7}), k, 2, 1);
    CHECK(out.shape() == Shape{2, 4, 5, 4});
    CHECK(max_abs(out) == 0.0f);
  }
  SUBCASE("scalar product") {
    const Tensor out = conv2d(Tensor(Shape{1, 1, 1, 1}, 2.0f), Tensor(Shape{1, 1, 1, 1}, 3.0f), 1, 0);
    CHECK(out.shape() == Shape{1, 1, 1, 1});
    CHECK(out[0] == 6.0f);
  }
  SUBCASE("channel mismatch names both shapes") {
    try {
      conv2d(Tensor(Shape{1, 3, 8, 8}), Tensor(Shape{2, 4, 3, 3}), 1, 0);
      FAIL("expected an error");
    } catch (const Error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[1,3,8,8]") != std::string::npos);
      CHECK(msg.find("[2,4,3,3]") != std::string::npos);
    }
  }
  SUBCASE("matches an f64 reference with padding and stride") {
    Rng rng(2);
    const Tensor x = oracle::random_tensor(rng, Shape{2, 3, 7, 6});
    const Tensor k = oracle::random_tensor(rng, Shape{5, 3, 3, 2});
    const Tensor out = conv2d(x, k, 2, 1);
    const auto ref = oracle::d_conv2d(oracle::D::from(x), oracle::D::from(k), 2, 1);
    REQUIRE(out.shape() == ref.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(ref.v[static_cast<std::size_t>(i)]).epsilon(1e-5));
  }
  SUBCASE("sf kernel bank reproduces the block transform") {
    Rng rng(3);
    const Tensor x = oracle::random_tensor(rng, Shape{1, 3, 8, 8}, 0.0f, 1.0f);
    Tensor shifted = x;
    for (auto& v : shifted.data()) v -= 0.5f;
    const Tensor& bank = spectral::sf_kernel_bank().weights;
    CHECK(max_abs_diff(conv2d(shifted, bank, 8, 0), oracle::naive_block_dct(x)) <= 1e-5f);
  }
}

TEST_CASE("primitive forwards") {
  Tape tape;
  SUBCASE("relu") {
    const Var y = ops::relu(tape.constant(Tensor(Shape{3}, std::vector<float>{-1.0f, 0.0f, 2.0f})));
    CHECK(y.value()[0] == 0.0f);
    CHECK(y.value()[1] == 0.0f);
    CHECK(y.value()[2] == 2.0f);
  }
  SUBCASE("uniform softmax cross-entropy is ln K") {
    const std::vector<int> labels{0, 3, 6};
    const Var loss = ops::softmax_xent(tape.constant(Tensor(Shape{3, 7}, 0.25f)), labels);
    CHECK(loss.value()[0] == doctest::Approx(std::log(7.0)).epsilon(1e-6));
  }
  SUBCASE("global average pool") {
    const Var y = ops::global_avg_pool(tape.constant(Tensor(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 5})));
    CHECK(y.shape() == Shape{1, 1});
    CHECK(y.value()[0] == 2.75f);
  }
  SUBCASE("max pool picks window maxima") {
    const Var y = ops::max_pool(tape.constant(Tensor(Shape{1, 1, 2, 4}, std::vector<float>{1, 4, -1, -2, 3, 2, -3, -5})), 2, 2);
    CHECK(y.value()[0] == 4.0f);
    CHECK(y.value()[1] == -1.0f);
  }
  SUBCASE("batch norm training output is standardized") {
    Rng rng(5);
    BatchNormState state(2);
    const Var y = ops::batch_norm(tape.constant(oracle::random_tensor(rng, Shape{4, 2, 3, 3}, -3.0f, 5.0f)),
                                  tape.constant(Tensor(Shape{2}, 1.0f)), tape.constant(Tensor(Shape{2}, 0.0f)),
                                  state, true);
    for (int c = 0; c < 2; ++c) {
      double mean = 0.0, sq = 0.0;
      for (int n = 0; n < 4; ++n)
        for (int h = 0; h < 3; ++h)
          for (int w = 0; w < 3; ++w) {
            const double v = y.value().at(n, c, h, w);
            mean += v;
            sq += v * v;
          }
      CHECK(mean / 36 == doctest::Approx(0.0).epsilon(1e-5));
      CHECK(sq / 36 == doctest::Approx(1.0).epsilon(1e-3));
    }
    CHECK(state.running_mean[0] != 0.0f);
  }
  SUBCASE("linear") {
    const Var y = ops::linear(tape.constant(Tensor(Shape{1, 2}, std::vector<float>{1, 2})),
                              tape.constant(Tensor(Shape{2, 2}, std::vector<float>{1, 1, 0, -1})),
                              tape.constant(Tensor(Shape{2}, std::vector<float>{0.5f, 0})));
    CHECK(y.value()[0] == 3.5f);
    CHECK(y.value()[1] == -2.0f);
  }
  SUBCASE("overflowing loss is reported") {
    Tensor logits(Shape{1, 2}, 0.0f);
    logits[0] = std::numeric_limits<float>::infinity();
    logits[1] = -std::numeric_limits<float>::infinity();
    const std::vector<int> labels{1};
    CHECK_THROWS_AS(ops::softmax_xent(tape.constant(logits), labels), NumericalError);
  }
}

TEST_CASE("backward on small graphs") {
  SUBCASE("sum gives ones") {
    Tape tape;
    Rng rng(9);
    const Var x = tape.input(oracle::random_tensor(rng, Shape{2, 3, 4}));
    const auto grads = backward(tape, ops::sum(x));
    CHECK(grads.of(x).same_values(Tensor::ones(Shape{2, 3, 4})));
  }
  SUBCASE("relu subgradient") {
    Tape tape;
    const Var x = tape.input(Tensor(Shape{2}, std::vector<float>{-1.0f, 2.0f}));
    const auto grads = backward(tape, ops::sum(ops::relu(x)));
    CHECK(grads.of(x)[0] == 0.0f);
    CHECK(grads.of(x)[1] == 1.0f);
  }
  SUBCASE("unused input gets zeros, foreign and constant vars are rejected") {
    Tape tape, other;
    const Var x = tape.input(Tensor(Shape{3}, 1.0f));
    const Var unused = tape.input(Tensor(Shape{2}, 1.0f));
    const Var c = tape.constant(Tensor(Shape{3}, 1.0f));
    const Var foreign = other.input(Tensor(Shape{3}, 1.0f));
    const auto grads = backward(tape, ops::sum(ops::add(x, c)));
    CHECK(max_abs(grads.of(unused)) == 0.0f);
    CHECK_THROWS_AS(grads.of(c), Error);
    CHECK_THROWS_AS(grads.of(foreign), Error);
    CHECK_THROWS_AS(backward(tape, x), Error);
  }
}

// Two-layer conv net against central differences of an f64 reference.
TEST_CASE("conv net gradients match finite differences") {
  using namespace oracle;
  Rng rng(2024);
  const std::int64_t n = 3, cin = 2, cmid = 4, k = 3;
  const std::vector<int> labels{0, 2, 1};
  const Tensor x = random_tensor(rng, Shape{n, cin, 6, 6}, 0.0f, 1.0f);
  const Tensor w1 = random_tensor(rng, Shape{cmid, cin, 3, 3}, -0.5f, 0.5f);
  const Tensor w2 = random_tensor(rng, Shape{k, cmid, 3, 3}, -0.5f, 0.5f);
  const Tensor wf = random_tensor(rng, Shape{k, k}, -1.0f, 1.0f);
  const Tensor bf = random_tensor(rng, Shape{k}, -0.1f, 0.1f);

  Tape tape;
  const std::array<Var, 5> v{tape.input(x), tape.input(w1), tape.input(w2), tape.input(wf), tape.input(bf)};
  const Var h = ops::relu(ops::conv2d(v[0], v[1], 1, 1));
  const Var logits = ops::linear(ops::global_avg_pool(ops::conv2d(h, v[2], 2, 0)), v[3], v[4]);
  const auto grads = backward(tape, ops::softmax_xent(logits, labels));

  const std::array<const Tensor*, 5> inputs{&x, &w1, &w2, &wf, &bf};
  int close = 0, total = 0;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    auto reference = [&](const D& probe) {
      std::array<D, 5> d{D::from(x), D::from(w1), D::from(w2), D::from(wf), D::from(bf)};
      d[which] = probe;
      const D hh = d_relu(d_conv2d(d[0], d[1], 1, 1));
      return d_softmax_xent(d_linear(d_global_avg_pool(d_conv2d(hh, d[2], 2, 0)), d[3], d[4]), labels);
    };
    const Tensor numeric = central_difference_f64(reference, *inputs[which]);
    const Tensor& analytic = grads.of(v[which]);
    for (std::int64_t i = 0; i < numeric.numel(); ++i) {
      const double denom = std::max({std::abs(static_cast<double>(numeric[i])), std::abs(static_cast<double>(analytic[i])), 1e-4});
      close += std::abs(analytic[i] - numeric[i]) / denom <= 1e-2;
      ++total;
    }
  }
  CHECK(static_cast<double>(close) >= 0.95 * total);
}

TEST_CASE("adam") {
  SUBCASE("first step moves by about lr") {
    Tensor p(Shape{1}, 0.0f);
    const Tensor g(Shape{1}, 1.0f);
    const std::array<Shape, 1> shapes{Shape{1}};
    AdamState state(AdamConfig{}, shapes);
    std::array<Tensor*, 1> ps{&p};
    std::array<const Tensor*, 1> gs{&g};
    adam_step(state, ps, gs);
    CHECK(p[0] == doctest::Approx(-0.001).epsilon(1e-4));
    CHECK(state.steps() == 1);
  }
  SUBCASE("zero gradient leaves params and decays moments") {
    Tensor p(Shape{2}, std::vector<float>{0.3f, -0.2f});
    const Tensor g1(Shape{2}, 1.0f), g0(Shape{2}, 0.0f);
    const std::array<Shape, 1> shapes{Shape{2}};
    AdamState state(AdamConfig{}, shapes);
    std::array<Tensor*, 1> ps{&p};
    std::array<const Tensor*, 1> gs1{&g1}, gs0{&g0};
    adam_step(state, ps, gs1);
    const float m1 = state.first_moment()[0][0], v1 = state.second_moment()[0][0];
    // With nonzero moments a zero gradient still moves params, so restart.
    AdamState fresh(AdamConfig{}, shapes);
    const Tensor before = p;
    adam_step(fresh, ps, gs0);
    CHECK(p.same_values(before));
    adam_step(state, ps, gs0);
    CHECK(std::abs(state.first_moment()[0][0]) < std::abs(m1));
    CHECK(state.second_moment()[0][0] < v1);
  }
  SUBCASE("identical params stay identical") {
    Tensor a(Shape{3}, 0.7f), b(Shape{3}, 0.7f);
    const std::array<Shape, 2> shapes{Shape{3}, Shape{3}};
    AdamState state(AdamConfig{}, shapes);
    Rng rng(4);
    for (int step = 0; step < 25; ++step) {
      const Tensor g = oracle::random_tensor(rng, Shape{3});
      std::array<Tensor*, 2> ps{&a, &b};
      std::array<const Tensor*, 2> gs{&g, &g};
      adam_step(state, ps, gs);
    }
    CHECK(a.same_values(b));
  }
  SUBCASE("non-finite gradient rejects the whole step") {
    Tensor p(Shape{2}, 1.0f);
    Tensor g(Shape{2}, 0.5f);
    g[1] = std::numeric_limits<float>::quiet_NaN();
    const std::array<Shape, 1> shapes{Shape{2}};
    AdamState state(AdamConfig{}, shapes);
    std::array<Tensor*, 1> ps{&p};
    std::array<const Tensor*, 1> gs{&g};
    CHECK_THROWS_AS(adam_step(state, ps, gs), NumericalError);
    CHECK(p.same_values(Tensor(Shape{2}, 1.0f)));
    CHECK(state.steps() == 0);
  }
}

TEST_CASE("glorot init") {
  Rng a(11), b(11);
  const Tensor t = glorot_init(a, Shape{100000}, 3, 3);
  CHECK(t.same_values(glorot_init(b, Shape{100000}, 3, 3)));
  const double bound = 1.0;  // sqrt(6 / 6)
  double mean = 0.0, sq = 0.0;
  CHECK_LE(max_abs(t), bound);
  for (float v : t.data()) {
    mean += v;
    sq += static_cast<double>(v) * v;
  }
  mean /= static_cast<double>(t.numel());
  const double var = sq / static_cast<double>(t.numel()) - mean * mean;
  CHECK(std::abs(var - 1.0 / 3.0) <= 0.1 / 3.0);
  CHECK_THROWS_AS(glorot_init(a, Shape{2}, 0, 3), Error);
}

TEST_CASE("parallel_for covers every index once") {
  std::vector<int> hits(1000, 0);
  parallel_for(1000, [&](std::int64_t i) { ++hits[static_cast<std::size_t>(i)]; });
  for (int h : hits) CHECK(h == 1);
}
