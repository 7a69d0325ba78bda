#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sflab/autodiff.hpp"
#include "sflab/dataset.hpp"
#include "sflab/ops.hpp"
#include "sflab/tensor.hpp"

namespace sflab {

enum class Variant { kSF, kC88, kBaseline, kInterp, kSubst };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

/// Declarative model description. `mix` is alpha for kInterp and beta for
/// kSubst; it is ignored otherwise.
struct ModelSpec {
  Variant variant = Variant::kSF;
  float mix = 0.0f;
  int num_classes = 10;
  int height = 32;
  int width = 32;
  std::uint64_t seed = 0;

  static ModelSpec sf(int classes, std::uint64_t seed) { return {Variant::kSF, 0.0f, classes, 32, 32, seed}; }
  static ModelSpec c88(int classes, std::uint64_t seed) { return {Variant::kC88, 0.0f, classes, 32, 32, seed}; }
  static ModelSpec baseline(int classes, std::uint64_t seed) {
    return {Variant::kBaseline, 0.0f, classes, 32, 32, seed};
  }
  static ModelSpec interp(float alpha, int classes, std::uint64_t seed) {
    return {Variant::kInterp, alpha, classes, 32, 32, seed};
  }
  static ModelSpec subst(float beta, int classes, std::uint64_t seed) {
    return {Variant::kSubst, beta, classes, 32, 32, seed};
  }

  void validate() const;
  /// e.g. "SF", "C88", "Interp(0.25)"
  std::string label() const;
};

/// Number of stem channels taken from the SF bank for Subst(beta).
int substituted_channel_count(float beta);

enum class Probe { kInit = 0, kConv1 = 1, kConv2 = 2, kFc = 3 };
inline constexpr std::array<Probe, 4> kAllProbes{Probe::kInit, Probe::kConv1, Probe::kConv2,
                                                 Probe::kFc};
std::string_view probe_name(Probe p);

/// One named tensor of a model. `frozen_rows` (when non-empty) marks slices
/// along axis 0 that never change during training.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
  std::vector<std::uint8_t> frozen_rows;

  bool fully_frozen() const noexcept { return !trainable; }
  std::int64_t trainable_count() const;
};

/// Running statistics of a batch-norm layer, stored alongside parameters.
struct NamedBatchNorm {
  std::string name;
  BatchNormState state;
};

class ModelInstance {
 public:
  explicit ModelInstance(ModelSpec spec) : spec_(spec) {}

  const ModelSpec& spec() const noexcept { return spec_; }

  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  std::vector<NamedBatchNorm>& batch_norms() noexcept { return bns_; }
  const std::vector<NamedBatchNorm>& batch_norms() const noexcept { return bns_; }

  Parameter& param(std::string_view name);
  const Parameter& param(std::string_view name) const;
  BatchNormState& bn(std::string_view name);
  const BatchNormState& bn(std::string_view name) const;

  /// Stem convolution weights (the 8x8 stem for all but Baseline).
  const Tensor& stem_kernels() const;
  std::int64_t trainable_parameter_count() const;

  Parameter& add_parameter(std::string name, Tensor value, bool trainable = true);
  BatchNormState& add_batch_norm(std::string name, std::int64_t channels);

 private:
  ModelSpec spec_;
  std::vector<Parameter> params_;
  std::vector<NamedBatchNorm> bns_;
};

ModelInstance build_model(const ModelSpec& spec);

/// Blended stem: alpha * sf + (1 - alpha) * c88, exact at both endpoints.
Tensor make_interpolated_kernels(const Tensor& sf, const Tensor& c88, float alpha);
/// The first round(beta * 192) channels from `sf`, the rest from `c88`.
Tensor make_substituted_kernels(const Tensor& sf, const Tensor& c88, float beta);
/// Freshly initialized C88 stem for a seed; identical to build_model's.
Tensor c88_stem_init(std::uint64_t seed);

enum class ForwardMode {
  kTrain,          // batch statistics, gradients for trainable parameters
  kEval,           // running statistics, no parameter gradients
};

struct ForwardOutput {
  Var logits;
  std::array<Var, 4> probes;  // indexed by Probe
};

/// Records the network on `tape`. Training mode updates running statistics
/// and, when `trainable_leaves` is given, fills it parallel to
/// model.parameters() with the tape leaf of each trainable parameter (frozen
/// entries stay unbound).
ForwardOutput forward(ModelInstance& model, Tape& tape, const Var& images, ForwardMode mode,
                      std::vector<Var>* trainable_leaves = nullptr);
/// Eval-mode forward; the model is not modified.
ForwardOutput forward_eval(const ModelInstance& model, Tape& tape, const Var& images);

/// Eval-mode logits for a batch, evaluated in fixed-size chunks.
Tensor predict_logits(const ModelInstance& model, const Tensor& images);
std::vector<int> predict(const ModelInstance& model, const Tensor& images);

struct ProbedForward {
  Tensor logits;
  std::array<Tensor, 4> probes;  // indexed by Probe
};
ProbedForward forward_with_probes(const ModelInstance& model, const Tensor& images);

/// Fraction of argmax-correct predictions (ties to the lowest class index).
float evaluate(const ModelInstance& model, const Dataset& data);

struct AdversarialTraining {
  float epsilon = 0.03f;
  float eta = 0.01f;
  int steps = 7;
};

struct TrainConfig {
  int epochs = 5;
  int batch_size = 64;
  float learning_rate = 1e-3f;
  std::uint64_t seed = 0;
  std::optional<AdversarialTraining> adversarial;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

class TrainingDivergence : public Error {
 public:
  TrainingDivergence(int epoch, std::int64_t batch, const std::string& what);
  int epoch() const noexcept { return epoch_; }
  std::int64_t batch() const noexcept { return batch_; }

 private:
  int epoch_;
  std::int64_t batch_;
};

/// Adam on mean softmax cross-entropy. Frozen parameters (and frozen rows)
/// are bitwise unchanged afterwards.
std::vector<EpochMetrics> train(ModelInstance& model, const Dataset& data, const TrainConfig& config);

}  // namespace sflab
