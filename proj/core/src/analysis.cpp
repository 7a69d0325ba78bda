#include "sflab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "sflab/spectral.hpp"

namespace sflab {

float cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 && nb == 0.0) return 1.0f;
  if (na == 0.0 || nb == 0.0) return 0.0f;
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return static_cast<float>(std::clamp(c, -1.0, 1.0));
}

float mean_cosine(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error("mean_cosine: activation shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const auto n = a.dim(0);
  if (n == 0) throw Error("mean_cosine: empty batch");
  const auto per = static_cast<std::size_t>(a.numel() / n);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    total += cosine_similarity(a.data().subspan(static_cast<std::size_t>(i) * per, per),
                               b.data().subspan(static_cast<std::size_t>(i) * per, per));
  }
  return static_cast<float>(total / static_cast<double>(n));
}

CosineReport cosine_probe(const ModelInstance& model, const Tensor& clean, const Tensor& adversarial) {
  if (clean.shape() != adversarial.shape()) {
    throw Error("cosine_probe: clean batch " + to_string(clean.shape()) + " and adversarial batch " +
                to_string(adversarial.shape()) + " are not aligned");
  }
  const auto a = forward_with_probes(model, clean);
  const auto b = forward_with_probes(model, adversarial);
  CosineReport r;
  for (std::size_t p = 0; p < 4; ++p) r.mean[p] = mean_cosine(a.probes[p], b.probes[p]);
  return r;
}

int histogram_bin(float value) {
  for (int b = 1; b < kHistogramBins; ++b) {
    if (value < kHistogramEdges[static_cast<std::size_t>(b)]) return b - 1;
  }
  return kHistogramBins - 1;
}

std::vector<FrequencyHistogram> frequency_histogram(const Tensor& images) {
  const Tensor f = spectral::block_dct_forward(images);
  const auto n = f.dim(0);
  const auto per = f.numel() / n;
  std::vector<FrequencyHistogram> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    std::array<std::int64_t, kHistogramBins> counts{};
    for (std::int64_t k = i * per; k < (i + 1) * per; ++k) ++counts[static_cast<std::size_t>(histogram_bin(f[k]))];
    for (int b = 0; b < kHistogramBins; ++b) {
      out[static_cast<std::size_t>(i)].bins[static_cast<std::size_t>(b)] =
          static_cast<double>(counts[static_cast<std::size_t>(b)]) / static_cast<double>(per);
    }
  }
  return out;
}

namespace {

struct Sample {
  const FrequencyHistogram* features;
  int label;
};

double gini(std::int64_t pos, std::int64_t total) {
  if (total == 0) return 0.0;
  const double p = static_cast<double>(pos) / static_cast<double>(total);
  return 2.0 * p * (1.0 - p);
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

Split best_split(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
  std::int64_t pos_total = 0;
  for (auto i : idx) pos_total += samples[i].label;
  const auto n = static_cast<std::int64_t>(idx.size());
  const double parent = gini(pos_total, n);
  Split best;
  std::vector<std::size_t> order = idx;
  for (int f = 0; f < kHistogramBins; ++f) {
    auto value = [&](std::size_t i) { return samples[i].features->bins[static_cast<std::size_t>(f)]; };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return value(a) < value(b); });
    std::int64_t left_pos = 0;
    for (std::int64_t k = 0; k + 1 < n; ++k) {
      left_pos += samples[order[static_cast<std::size_t>(k)]].label;
      const double lo = value(order[static_cast<std::size_t>(k)]);
      const double hi = value(order[static_cast<std::size_t>(k + 1)]);
      if (!(lo < hi)) continue;
      const double t = lo + (hi - lo) / 2.0;
      if (!(lo < t && t < hi)) continue;
      const std::int64_t nl = k + 1, nr = n - nl;
      const double child = (static_cast<double>(nl) * gini(left_pos, nl) +
                            static_cast<double>(nr) * gini(pos_total - left_pos, nr)) /
                           static_cast<double>(n);
      const double gain = parent - child;
      // Strict improvement keeps the lowest feature, then the lowest threshold.
      if (gain > best.gain + 1e-12) best = Split{f, t, gain};
    }
  }
  return best;
}

}  // namespace

int DetectorModel::depth() const {
  std::function<int(int)> rec = [&](int i) -> int {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    if (n.feature < 0) return 0;
    return 1 + std::max(rec(n.left), rec(n.right));
  };
  return nodes.empty() ? 0 : rec(0);
}

DetectorModel train_detector(std::span<const FrequencyHistogram> clean,
                             std::span<const FrequencyHistogram> adversarial, int max_depth) {
  if (clean.empty() || adversarial.empty()) {
    throw Error("train_detector needs at least one clean and one adversarial histogram");
  }
  std::vector<Sample> samples;
  for (const auto& h : clean) samples.push_back({&h, 0});
  for (const auto& h : adversarial) samples.push_back({&h, 1});

  DetectorModel model;
  model.max_depth = max_depth;
  std::function<int(const std::vector<std::size_t>&, int)> grow = [&](const std::vector<std::size_t>& idx,
                                                                      int depth) -> int {
    const int id = static_cast<int>(model.nodes.size());
    model.nodes.emplace_back();
    std::int64_t pos = 0;
    for (auto i : idx) pos += samples[i].label;
    const auto n = static_cast<std::int64_t>(idx.size());
    {
      auto& node = model.nodes[static_cast<std::size_t>(id)];
      node.samples = n;
      node.label = (2 * pos > n) ? DetectionLabel::kAdversarial : DetectionLabel::kClean;
    }
    if (depth >= max_depth || pos == 0 || pos == n) return id;
    const Split s = best_split(samples, idx);
    if (s.feature < 0) return id;
    std::vector<std::size_t> left, right;
    for (auto i : idx) {
      (samples[i].features->bins[static_cast<std::size_t>(s.feature)] <= s.threshold ? left : right).push_back(i);
    }
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& node = model.nodes[static_cast<std::size_t>(id)];
    node.feature = s.feature;
    node.threshold = s.threshold;
    node.left = l;
    node.right = r;
    return id;
  };
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  grow(all, 0);
  return model;
}

DetectionLabel detect(const DetectorModel& model, const FrequencyHistogram& histogram) {
  if (model.nodes.empty()) throw Error("detect: untrained detector");
  int i = 0;
  for (;;) {
    const auto& n = model.nodes[static_cast<std::size_t>(i)];
    if (n.feature < 0) return n.label;
    i = histogram.bins[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
}

double detection_accuracy(const DetectorModel& model, std::span<const FrequencyHistogram> clean,
                          std::span<const FrequencyHistogram> adversarial) {
  const auto total = clean.size() + adversarial.size();
  if (total == 0) throw Error("detection_accuracy: no samples");
  std::size_t correct = 0;
  for (const auto& h : clean) correct += detect(model, h) == DetectionLabel::kClean;
  for (const auto& h : adversarial) correct += detect(model, h) == DetectionLabel::kAdversarial;
  return static_cast<double>(correct) / static_cast<double>(total);
}

ReconstructionTable reconstruction_eval(const ModelInstance& model, const Dataset& data,
                                        const Tensor& adversarial_images) {
  if (adversarial_images.shape() != data.images.shape()) {
    throw Error("reconstruction_eval: adversarial set " + to_string(adversarial_images.shape()) +
                " does not match dataset " + to_string(data.images.shape()));
  }
  auto acc = [&](const Tensor& images) {
    Dataset d{images, data.labels, data.num_classes};
    return evaluate(model, d);
  };
  using spectral::Reconstruction;
  ReconstructionTable t;
  t.clean[0] = acc(data.images);
  t.clean[1] = acc(spectral::frequency_reconstruct(data.images, Reconstruction::kLowFrequency));
  t.clean[2] = acc(spectral::frequency_reconstruct(data.images, Reconstruction::kHighFrequency));
  t.adversarial[0] = acc(adversarial_images);
  t.adversarial[1] = acc(spectral::frequency_reconstruct(adversarial_images, Reconstruction::kLowFrequency));
  t.adversarial[2] = acc(spectral::frequency_reconstruct(adversarial_images, Reconstruction::kHighFrequency));
  return t;
}

}  // namespace sflab
