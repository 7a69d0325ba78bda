#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sflab/dataset.hpp"
#include "sflab/models.hpp"
#include "sflab/tensor.hpp"

namespace sflab {

// ---------------------------------------------------------------------------
// Cosine probes
// ---------------------------------------------------------------------------

/// Mean per-image cosine similarity between clean and adversarial
/// activations at each probe point, indexed by Probe.
struct CosineReport {
  std::array<float, 4> mean{};
  float at(Probe p) const { return mean[static_cast<std::size_t>(p)]; }
};

/// cos(a, b) of two flattened activations. Two zero vectors count as 1, one
/// zero vector against a nonzero one as 0.
float cosine_similarity(std::span<const float> a, std::span<const float> b);

/// Per-image cosine of two [N, ...] activation tensors, averaged over N.
float mean_cosine(const Tensor& a, const Tensor& b);

CosineReport cosine_probe(const ModelInstance& model, const Tensor& clean, const Tensor& adversarial);

// ---------------------------------------------------------------------------
// Frequency histograms and the detector
// ---------------------------------------------------------------------------

inline constexpr int kHistogramBins = 5;
inline constexpr std::array<float, kHistogramBins + 1> kHistogramEdges{-3.0f, -1.8f, -0.6f,
                                                                        0.6f,  1.8f,  3.0f};

/// Normalized counts of block-DCT coefficient values over five equal bins of
/// [-3, 3]; values beyond either end land in the edge bins.
struct FrequencyHistogram {
  std::array<double, kHistogramBins> bins{};
};

int histogram_bin(float value);
std::vector<FrequencyHistogram> frequency_histogram(const Tensor& images);

enum class DetectionLabel : int { kClean = 0, kAdversarial = 1 };

/// Binary CART tree over histogram features (Gini impurity, depth <= 3).
/// Samples with feature <= threshold go left.
struct DetectorModel {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    DetectionLabel label = DetectionLabel::kClean;
    std::int64_t samples = 0;
  };
  std::vector<Node> nodes;  // nodes[0] is the root
  int max_depth = 3;

  int depth() const;
};

DetectorModel train_detector(std::span<const FrequencyHistogram> clean,
                             std::span<const FrequencyHistogram> adversarial, int max_depth = 3);
DetectionLabel detect(const DetectorModel& model, const FrequencyHistogram& histogram);
/// Fraction of correctly labeled histograms.
double detection_accuracy(const DetectorModel& model, std::span<const FrequencyHistogram> clean,
                          std::span<const FrequencyHistogram> adversarial);

// ---------------------------------------------------------------------------
// Low/high-frequency reconstruction evaluation
// ---------------------------------------------------------------------------

/// Accuracy on {ALL, LFR, HFR} x {clean, adversarial} image sets.
struct ReconstructionTable {
  std::array<float, 3> clean{};        // ALL, LFR, HFR
  std::array<float, 3> adversarial{};  // ALL, LFR, HFR
};

inline constexpr std::array<const char*, 3> kReconstructionRows{"ALL", "LFR", "HFR"};

ReconstructionTable reconstruction_eval(const ModelInstance& model, const Dataset& data,
                                        const Tensor& adversarial_images);

}  // namespace sflab
