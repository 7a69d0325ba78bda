#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sflab/attacks.hpp"
#include "sflab/data.hpp"
#include "sflab/models.hpp"

namespace sflab {

/// Experiment description read from a plain-text `key = value` file.
/// Blank lines and text after `#` are ignored. Keys:
///
///   experiment          free-form label
///   seed                drives data, initialization, shuffling
///   data.source         synthetic | cifar10-binary
///   data.paths          comma list of CIFAR-10 binary batch files
///   data.count          item count (0 = all records for cifar10-binary)
///   data.height, data.width, data.classes
///   data.split          train,val,test fractions
///   data.noise, data.signal, data.clutter   synthetic generator knobs
///   model.variant       comma list of SF | C88 | Baseline | Interp | Subst
///   model.mix           alpha / beta for Interp / Subst
///   model.checkpoint    checkpoint directory to load instead of training
///   train.epochs, train.batch, train.lr
///   train.adv_epsilon, train.adv_eta, train.adv_steps   adversarial training
///   attack.domain       pixel | frequency
///   attack.epsilons     comma list of budgets
///   attack.eta          step size (default: paired with each budget)
///   attack.steps
///   attack.limit        attack at most this many test images (0 = all)
///   transfer.surrogate  variant used to craft transfer examples
///   out                 output path
///
/// Relative paths resolve against the config file's directory.
struct RunConfig {
  std::string experiment = "default";
  std::uint64_t seed = 0;
  DatasetManifest data;
  std::vector<Variant> variants{Variant::kSF};
  float mix = 0.0f;
  std::optional<std::filesystem::path> checkpoint;
  TrainConfig train;
  AttackDomain attack_domain = AttackDomain::kPixel;
  std::vector<float> epsilons{0.003f, 0.01f};
  std::optional<float> eta;
  int steps = 100;
  std::int64_t attack_limit = 0;
  Variant surrogate = Variant::kBaseline;
  std::filesystem::path out = "report.csv";

  /// Pushes `seed` into every seeded component.
  void apply_seed(std::uint64_t s);
  ModelSpec model_spec(Variant v) const;
  AttackConfig attack_config(float epsilon) const;
  /// Throws when a value is out of range or a referenced path is missing.
  void validate() const;
};

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

std::vector<std::string> split_list(std::string_view text);
std::vector<float> parse_float_list(std::string_view text);

}  // namespace sflab
