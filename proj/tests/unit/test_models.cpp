#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sflab/models.hpp"
#include "sflab/spectral.hpp"

using namespace sflab;

namespace {

Tensor random_images(std::uint64_t seed, std::int64_t n, std::int64_t hw = 32) {
  Rng rng(seed);
  return oracle::random_tensor(rng, Shape{n, 3, hw, hw}, 0.0f, 1.0f);
}

// Two classes that differ in mean brightness, with pixel noise.
Dataset brightness_classes(std::int64_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.num_classes = 2;
  d.images = Tensor(Shape{n, 3, 32, 32});
  const std::int64_t per = 3 * 32 * 32;
  for (std::int64_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    d.labels.push_back(label);
    const float base = label ? 0.65f : 0.35f;
    for (std::int64_t j = 0; j < per; ++j) d.images[i * per + j] = std::clamp(base + 0.1f * rng.normal(), 0.0f, 1.0f);
  }
  return d;
}

// Logistic regression on the image mean, fit by plain gradient descent.
double logistic_oracle_accuracy(const Dataset& d) {
  const std::int64_t per = 3 * 32 * 32;
  std::vector<double> feature;
  for (std::int64_t i = 0; i < d.size(); ++i) {
    double m = 0.0;
    for (std::int64_t j = 0; j < per; ++j) m += d.images[i * per + j];
    feature.push_back(m / per - 0.5);
  }
  double w = 0.0, b = 0.0;
  for (int it = 0; it < 2000; ++it) {
    double gw = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < feature.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-(w * feature[i] + b)));
      gw += (p - d.labels[i]) * feature[i];
      gb += p - d.labels[i];
    }
    w -= 10.0 * gw / static_cast<double>(feature.size());
    b -= 10.0 * gb / static_cast<double>(feature.size());
  }
  int correct = 0;
  for (std::size_t i = 0; i < feature.size(); ++i) correct += ((w * feature[i] + b) > 0) == (d.labels[i] == 1);
  return correct / static_cast<double>(feature.size());
}

}  // namespace

TEST_CASE("model construction") {
  SUBCASE("SF stem is the kernel bank") {
    const auto m = build_model(ModelSpec::sf(10, 1));
    CHECK(m.stem_kernels().same_values(spectral::sf_kernel_bank().weights));
    CHECK(m.param("stem.w").fully_frozen());
  }
  SUBCASE("interpolation and substitution endpoints") {
    const Tensor c88 = c88_stem_init(5);
    CHECK(build_model(ModelSpec::interp(1.0f, 10, 5)).stem_kernels().same_values(spectral::sf_kernel_bank().weights));
    CHECK(build_model(ModelSpec::interp(0.0f, 10, 5)).stem_kernels().same_values(c88));
    CHECK(build_model(ModelSpec::c88(10, 5)).stem_kernels().same_values(c88));
    CHECK(build_model(ModelSpec::subst(0.0f, 10, 5)).stem_kernels().same_values(c88));
    CHECK(build_model(ModelSpec::subst(1.0f, 10, 5)).stem_kernels().same_values(spectral::sf_kernel_bank().weights));
  }
  SUBCASE("backbone is shared across variants for one seed") {
    const auto a = build_model(ModelSpec::sf(10, 9));
    const auto b = build_model(ModelSpec::c88(10, 9));
    CHECK(a.param("fc.w").value.same_values(b.param("fc.w").value));
    CHECK_FALSE(a.param("fc.w").value.same_values(build_model(ModelSpec::sf(10, 10)).param("fc.w").value));
  }
  SUBCASE("trainable parameter counts") {
    const auto sf = build_model(ModelSpec::sf(10, 0)).trainable_parameter_count();
    const auto c88 = build_model(ModelSpec::c88(10, 0)).trainable_parameter_count();
    const auto subst = build_model(ModelSpec::subst(0.25f, 10, 0)).trainable_parameter_count();
    CHECK(c88 - sf == 192 * 3 * 64);
    CHECK(c88 - subst == 48 * 3 * 64);
  }
  SUBCASE("invalid specs") {
    CHECK_THROWS_AS(build_model(ModelSpec::interp(1.5f, 10, 0)), Error);
    CHECK_THROWS_AS(build_model(ModelSpec::sf(1, 0)), Error);
    CHECK_THROWS_AS(build_model({Variant::kSF, 0.0f, 10, 30, 32, 0}), Error);
    CHECK_THROWS_AS(parse_variant("nope"), Error);
  }
  CHECK(ModelSpec::interp(0.25f, 10, 0).label() == "Interp(0.25)");
  CHECK(parse_variant(variant_name(Variant::kSubst)) == Variant::kSubst);
}

TEST_CASE("mixture kernels") {
  const Tensor sf(Shape{192, 3, 8, 8}, 0.2f), c88(Shape{192, 3, 8, 8}, 0.6f);
  CHECK(make_interpolated_kernels(sf, c88, 0.0f).same_values(c88));
  CHECK(make_interpolated_kernels(sf, c88, 1.0f).same_values(sf));
  const Tensor mid = make_interpolated_kernels(sf, c88, 0.5f);
  for (float v : mid.data()) CHECK(v == doctest::Approx(0.4f));

  CHECK(make_substituted_kernels(sf, c88, 0.0f).same_values(c88));
  CHECK(make_substituted_kernels(sf, c88, 1.0f).same_values(sf));
  CHECK(substituted_channel_count(1.0f / 64) == 3);
  CHECK(substituted_channel_count(0.25f) == 48);
  const Tensor quarter = make_substituted_kernels(sf, c88, 0.25f);
  const std::int64_t per = 3 * 64;
  for (std::int64_t f = 0; f < 192; ++f) CHECK(quarter[f * per] == (f < 48 ? 0.2f : 0.6f));
  const Tensor dc = make_substituted_kernels(sf, c88, 1.0f / 64);
  for (std::int64_t f = 0; f < 192; ++f) CHECK(dc[f * per + 5] == (f < 3 ? 0.2f : 0.6f));

  const auto m = build_model(ModelSpec::subst(1.0f / 64, 10, 2));
  const auto& rows = m.param("stem.w").frozen_rows;
  REQUIRE(rows.size() == 192);
  CHECK(std::accumulate(rows.begin(), rows.end(), 0) == 3);
  CHECK(rows[0] == 1);
  CHECK(rows[2] == 1);
  CHECK(rows[3] == 0);
}

TEST_CASE("forward and probes") {
  const Tensor x = random_images(1, 4);
  for (auto spec : {ModelSpec::sf(7, 3), ModelSpec::c88(7, 3), ModelSpec::baseline(7, 3)}) {
    const auto m = build_model(spec);
    const auto out = forward_with_probes(m, x);
    CHECK(out.logits.shape() == Shape{4, 7});
    CHECK(out.logits.all_finite());
    CHECK(out.probes[static_cast<int>(Probe::kFc)].same_values(out.logits));
    CHECK(out.probes[static_cast<int>(Probe::kConv2)].shape() == Shape{4, 128, 2, 2});
    if (spec.variant != Variant::kBaseline) {
      CHECK(out.probes[static_cast<int>(Probe::kInit)].shape() == Shape{4, 192, 4, 4});
      CHECK(out.probes[static_cast<int>(Probe::kConv1)].shape() == Shape{4, 128, 4, 4});
    }
    CHECK(predict_logits(m, x).same_values(out.logits));
  }
  const auto sf = forward_with_probes(build_model(ModelSpec::sf(10, 0)), x);
  CHECK(max_abs_diff(sf.probes[static_cast<int>(Probe::kInit)], spectral::block_dct_forward(x)) <= 1e-5f);
}

TEST_CASE("evaluate") {
  const auto m = build_model(ModelSpec::sf(10, 4));
  SUBCASE("single item predicted correctly") {
    Dataset one{random_images(2, 1), {}, 10};
    one.labels.push_back(predict(m, one.images)[0]);
    CHECK(evaluate(m, one) == 1.0f);
  }
  SUBCASE("random labels give chance accuracy") {
    Dataset d{random_images(3, 600), {}, 10};
    Rng rng(8);
    for (int i = 0; i < 600; ++i) d.labels.push_back(static_cast<int>(rng.below(10)));
    // Binomial std at p = 0.1 over 600 items is about 0.012; an untrained
    // model may still favor a few classes, so the band is wide.
    CHECK(std::abs(evaluate(m, d) - 0.1f) <= 0.1f);
  }
  SUBCASE("batch partition invariance") {
    Dataset d{random_images(4, 150), {}, 10};
    Rng rng(9);
    for (int i = 0; i < 150; ++i) d.labels.push_back(static_cast<int>(rng.below(10)));
    const float whole = evaluate(m, d);
    double parts = 0.0;
    for (std::int64_t b = 0; b < 150; b += 37) {
      const auto e = std::min<std::int64_t>(b + 37, 150);
      parts += evaluate(m, d.slice(b, e)) * static_cast<double>(e - b);
    }
    CHECK(parts / 150.0 == doctest::Approx(whole).epsilon(1e-6));
  }
}

TEST_CASE("training") {
  const Dataset d = brightness_classes(512, 21);
  REQUIRE(logistic_oracle_accuracy(d) == 1.0);

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.seed = 3;

  auto sf = build_model(ModelSpec::sf(2, 6));
  const Tensor stem_before = sf.stem_kernels();
  const auto metrics = train(sf, d, cfg);
  REQUIRE(metrics.size() == 1);
  CHECK(evaluate(sf, d) >= 0.9f);
  CHECK(sf.stem_kernels().same_values(stem_before));

  auto again = build_model(ModelSpec::sf(2, 6));
  const auto metrics2 = train(again, d, cfg);
  CHECK(metrics2[0].mean_loss == metrics[0].mean_loss);
  CHECK(again.param("fc.w").value.same_values(sf.param("fc.w").value));

  SUBCASE("substitution keeps its SF rows") {
    auto m = build_model(ModelSpec::subst(1.0f / 64, 2, 6));
    const Tensor before = m.stem_kernels();
    TrainConfig small = cfg;
    small.batch_size = 64;
    train(m, d.slice(0, 128), small);
    const Tensor& after = m.stem_kernels();
    const std::int64_t per = 3 * 64;
    bool frozen_same = true, rest_moved = false;
    for (std::int64_t i = 0; i < after.numel(); ++i) {
      if (i < 3 * per) frozen_same &= after[i] == before[i];
      else rest_moved |= after[i] != before[i];
    }
    CHECK(frozen_same);
    CHECK(rest_moved);
  }
  SUBCASE("invalid configs") {
    TrainConfig bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(train(sf, d, bad), Error);
    bad = cfg;
    bad.learning_rate = -1.0f;
    CHECK_THROWS_AS(train(sf, d, bad), Error);
  }
}
