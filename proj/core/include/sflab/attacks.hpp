#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sflab/dataset.hpp"
#include "sflab/models.hpp"
#include "sflab/tensor.hpp"

namespace sflab {

enum class AttackDomain { kPixel, kFrequency };

std::string_view domain_name(AttackDomain d);
AttackDomain parse_domain(std::string_view name);

/// Untargeted l-inf PGD settings. `epsilon` is the pixel budget for the
/// pixel domain and the coefficient budget for the frequency domain.
struct AttackConfig {
  AttackDomain domain = AttackDomain::kPixel;
  float epsilon = 0.01f;
  float eta = 0.003f;
  int steps = 100;

  void validate() const;
};

/// Step size paired with a budget: 0.003 -> 0.001 and 0.01 -> 0.003, and
/// epsilon / 10 for any other budget.
float default_eta(float epsilon);

struct AdversarialBatch {
  Tensor original;
  Tensor adversarial;
  std::vector<int> labels;
  std::vector<int> clean_prediction;
  std::vector<int> adversarial_prediction;
  std::vector<std::uint8_t> success;  // adversarial_prediction != label
  std::vector<float> distance;        // l-inf, in the attack's domain
  AttackConfig config;

  std::int64_t size() const noexcept { return static_cast<std::int64_t>(labels.size()); }
  float clean_accuracy() const;
  float attacked_accuracy() const;
};

/// Mean cross-entropy loss of the eval-mode model and its gradient with
/// respect to the input pixels.
struct InputGradient {
  float loss = 0.0f;
  Tensor grad;
};
InputGradient input_gradient(const ModelInstance& model, const Tensor& images, std::span<const int> labels);

/// x_{t+1} = clip_[0,1](clip_{x0 +- eps}(x_t + eta * sign(grad))), starting
/// at x_0 = x (no random start), sign(0) = 0. Returns the final images.
Tensor pgd_pixel_images(const ModelInstance& model, const Tensor& images, std::span<const int> labels,
                        float epsilon, float eta, int steps);

AdversarialBatch pgd_pixel(const ModelInstance& model, const Tensor& images,
                           std::span<const int> labels, const AttackConfig& config);

/// PGD on the block-DCT coefficients f of the image. Each step moves f by
/// eta * sign(dL/df), clips to the eps ball around f_0, clamps the pixels to
/// [0,1] and re-extracts f. Blocks whose re-extracted coefficients leave the
/// ball instead shrink their step toward f_0 until the pixels fit, so both
/// constraints hold at every iterate.
AdversarialBatch pgd_frequency(const ModelInstance& model, const Tensor& images,
                               std::span<const int> labels, const AttackConfig& config);

AdversarialBatch run_attack(const ModelInstance& model, const Tensor& images,
                            std::span<const int> labels, const AttackConfig& config);

struct NamedModel {
  std::string name;
  const ModelInstance* model;
};

struct TransferRow {
  std::string target;
  float epsilon = 0.0f;
  float clean_accuracy = 0.0f;
  float attacked_accuracy = 0.0f;
};

/// Crafts pixel-domain examples once on the surrogate and scores every target.
std::vector<TransferRow> transfer_attack(const ModelInstance& surrogate,
                                         std::span<const NamedModel> targets, const Tensor& images,
                                         std::span<const int> labels, const AttackConfig& config);

/// train() with the adversarial branch enabled (defaults: eps 0.03, 7 steps).
std::vector<EpochMetrics> adversarial_train(ModelInstance& model, const Dataset& data, TrainConfig config);

}  // namespace sflab
