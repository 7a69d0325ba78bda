#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sflab/attacks.hpp"
#include "sflab/data.hpp"
#include "sflab/ops.hpp"
#include "sflab/spectral.hpp"

using namespace sflab;

namespace {

struct Fixture {
  Dataset train_set;
  Dataset test_set;
  ModelInstance model{ModelSpec::sf(10, 1)};
};

// A lightly trained SF model on a small synthetic set, shared across cases.
const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    SyntheticConfig cfg;
    cfg.count = 700;
    cfg.seed = 5;
    const Dataset all = make_synthetic(cfg);
    out.train_set = all.slice(0, 600);
    out.test_set = all.slice(600, 700);
    out.model = build_model(ModelSpec::sf(10, 1));
    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 1;
    train(out.model, out.train_set, tc);
    return out;
  }();
  return f;
}

double xent(const Tensor& logits, std::span<const int> labels) {
  const Tensor p = softmax(logits);
  const auto k = logits.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) total -= std::log(static_cast<double>(p[static_cast<std::int64_t>(i) * k + labels[i]]));
  return total / static_cast<double>(labels.size());
}

float linf(const Tensor& a, const Tensor& b) { return max_abs_diff(a, b); }

}  // namespace

TEST_CASE("attack config") {
  CHECK(default_eta(0.003f) == 0.001f);
  CHECK(default_eta(0.01f) == 0.003f);
  CHECK(default_eta(0.2f) == doctest::Approx(0.02f));
  CHECK(parse_domain(domain_name(AttackDomain::kFrequency)) == AttackDomain::kFrequency);
  AttackConfig bad;
  bad.epsilon = -0.1f;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = AttackConfig{};
  bad.steps = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("pixel pgd") {
  const auto& f = fixture();
  const Tensor x = f.test_set.images.slice0(0, 40);
  const std::span<const int> y(f.test_set.labels.data(), 40);

  SUBCASE("zero budget leaves images unchanged") {
    AttackConfig cfg{AttackDomain::kPixel, 0.0f, 0.003f, 10};
    const auto batch = pgd_pixel(f.model, x, y, cfg);
    CHECK(batch.adversarial.same_values(x));
    for (std::int64_t i = 0; i < batch.size(); ++i)
      CHECK(static_cast<bool>(batch.success[static_cast<std::size_t>(i)]) == (batch.clean_prediction[static_cast<std::size_t>(i)] != y[static_cast<std::size_t>(i)]));
    CHECK(batch.attacked_accuracy() == batch.clean_accuracy());
  }
  SUBCASE("model with constant logits has zero gradient and does not move") {
    auto flat = build_model(ModelSpec::sf(10, 2));
    flat.param("fc.w").value.fill(0.0f);
    const auto g = input_gradient(flat, x, y);
    CHECK(max_abs(g.grad) == 0.0f);
    CHECK(pgd_pixel_images(flat, x, y, 0.05f, 0.01f, 5).same_values(x));
  }
  SUBCASE("one step follows the sign of the input gradient") {
    const auto g = input_gradient(f.model, x, y);
    const float eta = 0.004f;
    const Tensor x1 = pgd_pixel_images(f.model, x, y, 0.01f, eta, 1);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      const float s = g.grad[i] > 0 ? 1.0f : (g.grad[i] < 0 ? -1.0f : 0.0f);
      CHECK(x1[i] == std::clamp(x[i] + eta * s, 0.0f, 1.0f));
    }
    // The gradient itself: directional derivative along sign(g), which is
    // the l1 norm of g, against a central difference of the loss.
    Tensor dir(x.shape());
    double l1 = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      dir[i] = g.grad[i] > 0 ? 1.0f : (g.grad[i] < 0 ? -1.0f : 0.0f);
      l1 += std::abs(g.grad[i]);
    }
    const float h = 2e-4f;
    Tensor up = x, down = x;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      up[i] += h * dir[i];
      down[i] -= h * dir[i];
    }
    const double numeric = (xent(predict_logits(f.model, up), y) - xent(predict_logits(f.model, down), y)) / (2.0 * h);
    CHECK(numeric == doctest::Approx(l1).epsilon(0.05));
    CHECK(g.loss == doctest::Approx(xent(predict_logits(f.model, x), y)).epsilon(1e-4));
  }
  SUBCASE("ball, range and monotone strength") {
    float previous = 1.0f;
    for (float eps : {0.003f, 0.01f, 0.03f}) {
      const auto batch = pgd_pixel(f.model, x, y, {AttackDomain::kPixel, eps, default_eta(eps), 20});
      CHECK(linf(batch.adversarial, x) <= eps + 1e-6f);
      CHECK(*std::min_element(batch.adversarial.data().begin(), batch.adversarial.data().end()) >= 0.0f);
      CHECK(*std::max_element(batch.adversarial.data().begin(), batch.adversarial.data().end()) <= 1.0f);
      for (float d : batch.distance) CHECK(d <= eps + 1e-6f);
      CHECK(batch.attacked_accuracy() <= previous + 0.02f);
      previous = batch.attacked_accuracy();
    }
  }
  SUBCASE("mismatched labels") {
    const std::vector<int> few{0, 1};
    CHECK_THROWS_AS(pgd_pixel(f.model, x, few, AttackConfig{}), Error);
  }
}

TEST_CASE("frequency pgd") {
  const auto& f = fixture();
  const Tensor x = f.test_set.images.slice0(0, 30);
  const std::span<const int> y(f.test_set.labels.data(), 30);
  const Tensor f0 = spectral::block_dct_forward(x);

  SUBCASE("zero budget round trips") {
    const auto batch = pgd_frequency(f.model, x, y, {AttackDomain::kFrequency, 0.0f, 0.001f, 5});
    CHECK(linf(batch.adversarial, x) <= 1e-5f);
  }
  for (float eps : {0.003f, 0.01f}) {
    CAPTURE(eps);
    const auto batch = pgd_frequency(f.model, x, y, {AttackDomain::kFrequency, eps, default_eta(eps), 20});
    CHECK(linf(spectral::block_dct_forward(batch.adversarial), f0) <= eps + 1e-6f);
    CHECK(*std::min_element(batch.adversarial.data().begin(), batch.adversarial.data().end()) >= 0.0f);
    CHECK(*std::max_element(batch.adversarial.data().begin(), batch.adversarial.data().end()) <= 1.0f);
    CHECK(linf(batch.adversarial, x) <= spectral::max_pixel_deviation(eps) + 1e-6f);
    CHECK(linf(batch.adversarial, x) <= 0.122f + 1e-3f);
    CHECK(linf(batch.adversarial, x) > 0.0f);
  }
}

TEST_CASE("transfer") {
  const auto& f = fixture();
  const Tensor x = f.test_set.images.slice0(0, 30);
  const std::span<const int> y(f.test_set.labels.data(), 30);
  auto other = build_model(ModelSpec::c88(10, 1));
  const std::vector<NamedModel> targets{{"self", &f.model}, {"other", &other}};

  const AttackConfig cfg{AttackDomain::kPixel, 0.03f, 0.003f, 10};
  const auto rows = transfer_attack(f.model, targets, x, y, cfg);
  REQUIRE(rows.size() == 2);
  const auto own = pgd_pixel(f.model, x, y, cfg);
  CHECK(rows[0].attacked_accuracy <= rows[0].clean_accuracy);
  CHECK(rows[0].attacked_accuracy == own.attacked_accuracy());
  CHECK(rows[0].clean_accuracy == own.clean_accuracy());

  const auto none = transfer_attack(f.model, targets, x, y, {AttackDomain::kPixel, 0.0f, 0.003f, 10});
  for (const auto& r : none) CHECK(r.attacked_accuracy == r.clean_accuracy);
}

TEST_CASE("adversarial training") {
  const auto& f = fixture();
  const Dataset small = f.train_set.slice(0, 200);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 4;

  SUBCASE("zero budget matches standard training") {
    auto a = build_model(ModelSpec::c88(10, 3));
    auto b = build_model(ModelSpec::c88(10, 3));
    TrainConfig adv = cfg;
    adv.adversarial = AdversarialTraining{0.0f, 0.01f, 3};
    const auto ma = adversarial_train(a, small, adv);
    const auto mb = train(b, small, cfg);
    CHECK(ma[0].mean_loss == mb[0].mean_loss);
    for (std::size_t i = 0; i < a.parameters().size(); ++i)
      CHECK(a.parameters()[i].value.same_values(b.parameters()[i].value));
  }
  SUBCASE("frozen stem survives") {
    auto m = build_model(ModelSpec::sf(10, 3));
    adversarial_train(m, small, cfg);
    CHECK(m.stem_kernels().same_values(spectral::sf_kernel_bank().weights));
  }
}

// Adversarially trained twin against a standard twin at the training budget.
// The synthetic classes separate at a smaller pixel scale than natural
// images, so the twins are trained and attacked at 0.01 instead of 0.03.
TEST_CASE("adversarial training improves robustness") {
  const auto& f = fixture();
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 8;
  auto standard = build_model(ModelSpec::sf(10, 6));
  auto robust = build_model(ModelSpec::sf(10, 6));
  train(standard, f.train_set, cfg);
  cfg.adversarial = AdversarialTraining{0.01f, 0.003f, 7};
  adversarial_train(robust, f.train_set, cfg);
  const AttackConfig attack{AttackDomain::kPixel, 0.01f, 0.003f, 20};
  const auto& t = f.test_set;
  const float a_std = pgd_pixel(standard, t.images, t.labels, attack).attacked_accuracy();
  const float a_rob = pgd_pixel(robust, t.images, t.labels, attack).attacked_accuracy();
  MESSAGE("attacked accuracy at 0.01: standard " << a_std << ", adversarial " << a_rob);
  CHECK(a_rob > a_std);
}
