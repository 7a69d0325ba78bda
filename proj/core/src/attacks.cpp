#include "sflab/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "sflab/parallel.hpp"
#include "sflab/spectral.hpp"

namespace sflab {

namespace {

constexpr std::int64_t kAttackChunk = 64;

float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

// Runs fn on fixed-size chunks of a batch and stitches the outputs.
template <typename Fn>
Tensor map_chunks(const Tensor& images, std::span<const int> labels, Fn&& fn) {
  const auto n = images.dim(0);
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw Error("attack: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " images");
  }
  const std::int64_t chunks = (n + kAttackChunk - 1) / kAttackChunk;
  std::vector<Tensor> parts(static_cast<std::size_t>(chunks));
  parallel_for(chunks, [&](std::int64_t c) {
    const auto b = c * kAttackChunk, e = std::min(n, b + kAttackChunk);
    parts[static_cast<std::size_t>(c)] = fn(images.slice0(b, e), labels.subspan(static_cast<std::size_t>(b),
                                                                                static_cast<std::size_t>(e - b)));
  });
  return concat0(parts);
}

Tensor pixel_chunk(const ModelInstance& model, const Tensor& x0, std::span<const int> y, float eps,
                   float eta, int steps) {
  Tensor x = x0;
  for (int t = 0; t < steps; ++t) {
    const auto g = input_gradient(model, x, y).grad;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      float v = x[i] + eta * sign(g[i]);
      v = std::clamp(v, x0[i] - eps, x0[i] + eps);
      x[i] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return x;
}

// Per (image, color, block) view into a frequency tensor [N,192,bh,bw].
struct BlockIndexer {
  std::int64_t bh, bw;
  std::int64_t coeff(std::int64_t n, int ch, std::int64_t by, std::int64_t bx) const {
    return ((n * spectral::kChannels + ch) * bh + by) * bw + bx;
  }
};

Tensor frequency_chunk(const ModelInstance& model, const Tensor& x0, std::span<const int> y, float eps,
                       float eta, int steps) {
  using namespace spectral;
  const Tensor f0 = block_dct_forward(x0);
  const auto n = x0.dim(0), h = x0.dim(2), w = x0.dim(3);
  const BlockIndexer idx{h / kBlock, w / kBlock};
  Tensor f = f0;
  for (int t = 0; t < steps; ++t) {
    const Tensor x = block_dct_inverse(f);
    const Tensor gx = input_gradient(model, x, y).grad;
    const Tensor gf = block_dct_linear(gx);

    Tensor candidate = f;
    for (std::int64_t i = 0; i < f.numel(); ++i) {
      const float v = f[i] + eta * sign(gf[i]);
      candidate[i] = std::clamp(v, f0[i] - eps, f0[i] + eps);
    }
    const Tensor x_candidate = block_dct_inverse(candidate);
    Tensor x_clamped = x_candidate;
    for (auto& v : x_clamped.data()) v = std::clamp(v, 0.0f, 1.0f);
    Tensor next = block_dct_forward(x_clamped);

    // Blocks are independent: each color plane of each 8x8 block depends only
    // on its own 64 coefficients.
    for (std::int64_t b = 0; b < n; ++b) {
      for (int color = 0; color < kColors; ++color) {
        for (std::int64_t by = 0; by < idx.bh; ++by) {
          for (std::int64_t bx = 0; bx < idx.bw; ++bx) {
            bool inside = true;
            for (int z = 0; z < kFrequencies && inside; ++z) {
              const auto k = idx.coeff(b, channel_index(z, color), by, bx);
              inside = std::abs(next[k] - f0[k]) <= eps;
            }
            if (inside) continue;
            // Largest step fraction along f0 -> candidate keeping pixels in [0,1].
            float frac = 1.0f;
            const float* p0 = x0.raw() + (b * kColors + color) * h * w;
            const float* p1 = x_candidate.raw() + (b * kColors + color) * h * w;
            for (int i = 0; i < kBlock; ++i) {
              for (int j = 0; j < kBlock; ++j) {
                const auto k = (by * kBlock + i) * w + bx * kBlock + j;
                const float d = p1[k] - p0[k];
                if (p1[k] > 1.0f && d > 0.0f) frac = std::min(frac, (1.0f - p0[k]) / d);
                if (p1[k] < 0.0f && d < 0.0f) frac = std::min(frac, -p0[k] / d);
              }
            }
            frac = std::clamp(frac, 0.0f, 1.0f);
            for (int z = 0; z < kFrequencies; ++z) {
              const auto k = idx.coeff(b, channel_index(z, color), by, bx);
              next[k] = f0[k] + frac * (candidate[k] - f0[k]);
            }
          }
        }
      }
    }
    f = std::move(next);
  }
  return block_dct_inverse(f, kDefaultLevelShift, /*clamp=*/true);
}

AdversarialBatch assemble(const ModelInstance& model, const Tensor& images, std::span<const int> labels,
                          Tensor adversarial, const AttackConfig& config) {
  AdversarialBatch out;
  out.original = images;
  out.adversarial = std::move(adversarial);
  out.labels.assign(labels.begin(), labels.end());
  out.clean_prediction = predict(model, images);
  out.adversarial_prediction = predict(model, out.adversarial);
  out.config = config;
  const auto n = images.dim(0);
  out.success.resize(static_cast<std::size_t>(n));
  out.distance.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    out.success[static_cast<std::size_t>(i)] =
        out.adversarial_prediction[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(i)];
  }
  Tensor a = images, b = out.adversarial;
  if (config.domain == AttackDomain::kFrequency) {
    a = spectral::block_dct_forward(images);
    b = spectral::block_dct_forward(out.adversarial);
  }
  const auto per = a.numel() / n;
  for (std::int64_t i = 0; i < n; ++i) {
    float m = 0.0f;
    for (std::int64_t k = i * per; k < (i + 1) * per; ++k) m = std::max(m, std::abs(a[k] - b[k]));
    out.distance[static_cast<std::size_t>(i)] = m;
  }
  return out;
}

float accuracy(std::span<const int> pred, std::span<const int> labels) {
  if (labels.empty()) return 0.0f;
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<float>(static_cast<double>(correct) / static_cast<double>(labels.size()));
}

}  // namespace

std::string_view domain_name(AttackDomain d) {
  return d == AttackDomain::kPixel ? "pixel" : "frequency";
}

AttackDomain parse_domain(std::string_view name) {
  if (name == "pixel") return AttackDomain::kPixel;
  if (name == "frequency") return AttackDomain::kFrequency;
  throw Error("unknown attack domain '" + std::string(name) + "' (expected pixel or frequency)");
}

void AttackConfig::validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0.0f) throw Error("attack epsilon must be finite and >= 0");
  if (!std::isfinite(eta) || eta < 0.0f) throw Error("attack eta must be finite and >= 0");
  if (steps < 1) throw Error("attack steps must be >= 1");
}

float default_eta(float epsilon) {
  if (epsilon == 0.003f) return 0.001f;
  if (epsilon == 0.01f) return 0.003f;
  return epsilon / 10.0f;
}

float AdversarialBatch::clean_accuracy() const { return accuracy(clean_prediction, labels); }
float AdversarialBatch::attacked_accuracy() const { return accuracy(adversarial_prediction, labels); }

InputGradient input_gradient(const ModelInstance& model, const Tensor& images, std::span<const int> labels) {
  Tape tape;
  Var x = tape.input(images);
  auto out = forward_eval(model, tape, x);
  Var loss = ops::softmax_xent(out.logits, labels);
  auto grads = backward(tape, loss);
  InputGradient r{loss.value()[0], grads.of(x)};
  if (!r.grad.all_finite()) throw NumericalError("non-finite input gradient during attack");
  return r;
}

Tensor pgd_pixel_images(const ModelInstance& model, const Tensor& images, std::span<const int> labels,
                        float epsilon, float eta, int steps) {
  return map_chunks(images, labels, [&](const Tensor& x, std::span<const int> y) {
    return pixel_chunk(model, x, y, epsilon, eta, steps);
  });
}

AdversarialBatch pgd_pixel(const ModelInstance& model, const Tensor& images, std::span<const int> labels,
                           const AttackConfig& config) {
  config.validate();
  if (config.domain != AttackDomain::kPixel) throw Error("pgd_pixel requires a pixel-domain config");
  auto adv = pgd_pixel_images(model, images, labels, config.epsilon, config.eta, config.steps);
  return assemble(model, images, labels, std::move(adv), config);
}

AdversarialBatch pgd_frequency(const ModelInstance& model, const Tensor& images,
                               std::span<const int> labels, const AttackConfig& config) {
  config.validate();
  if (config.domain != AttackDomain::kFrequency) {
    throw Error("pgd_frequency requires a frequency-domain config");
  }
  auto adv = map_chunks(images, labels, [&](const Tensor& x, std::span<const int> y) {
    return frequency_chunk(model, x, y, config.epsilon, config.eta, config.steps);
  });
  return assemble(model, images, labels, std::move(adv), config);
}

AdversarialBatch run_attack(const ModelInstance& model, const Tensor& images, std::span<const int> labels,
                            const AttackConfig& config) {
  return config.domain == AttackDomain::kPixel ? pgd_pixel(model, images, labels, config)
                                               : pgd_frequency(model, images, labels, config);
}

std::vector<TransferRow> transfer_attack(const ModelInstance& surrogate, std::span<const NamedModel> targets,
                                         const Tensor& images, std::span<const int> labels,
                                         const AttackConfig& config) {
  for (const auto& t : targets) {
    if (t.model->spec().num_classes != surrogate.spec().num_classes) {
      throw Error("transfer target '" + t.name + "' has " + std::to_string(t.model->spec().num_classes) +
                  " classes but the surrogate has " + std::to_string(surrogate.spec().num_classes));
    }
  }
  AttackConfig pixel = config;
  pixel.domain = AttackDomain::kPixel;
  const auto batch = pgd_pixel(surrogate, images, labels, pixel);
  std::vector<TransferRow> rows;
  for (const auto& t : targets) {
    TransferRow r;
    r.target = t.name;
    r.epsilon = config.epsilon;
    r.clean_accuracy = accuracy(predict(*t.model, images), labels);
    r.attacked_accuracy = accuracy(predict(*t.model, batch.adversarial), labels);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<EpochMetrics> adversarial_train(ModelInstance& model, const Dataset& data, TrainConfig config) {
  if (!config.adversarial) config.adversarial = AdversarialTraining{};
  return train(model, data, config);
}

}  // namespace sflab
