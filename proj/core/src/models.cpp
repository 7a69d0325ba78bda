#include "sflab/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sflab/optim.hpp"
#include "sflab/parallel.hpp"
#include "sflab/rng.hpp"
#include "sflab/spectral.hpp"

namespace sflab {

namespace {

constexpr std::int64_t kStemChannels = spectral::kChannels;
constexpr std::int64_t kWidth = 128;
constexpr std::int64_t kEvalChunk = 64;

// Stream tags keep each parameter group's initialization independent of the
// variant, so shared parts of two variants start bitwise equal.
constexpr std::uint64_t kStemStream = 0x5354454DULL;
constexpr std::uint64_t kBaselineStream = 0x42415345ULL;
constexpr std::uint64_t kBackboneStream = 0x424F4E45ULL;

Rng stream(std::uint64_t seed, std::uint64_t tag) {
  Rng r(seed ^ (tag * 0x9E3779B97F4A7C15ULL));
  return r.split();
}

Tensor conv_init(Rng& rng, std::int64_t cout, std::int64_t cin, std::int64_t k) {
  return glorot_init(rng, Shape{cout, cin, k, k}, cin * k * k, cout * k * k);
}

void add_conv_bn(ModelInstance& m, Rng& rng, const std::string& name, std::int64_t cout,
                 std::int64_t cin, std::int64_t k) {
  m.add_parameter(name + ".w", conv_init(rng, cout, cin, k));
  m.add_parameter(name + ".bn.scale", Tensor(Shape{cout}, 1.0f));
  m.add_parameter(name + ".bn.shift", Tensor(Shape{cout}, 0.0f));
  m.add_batch_norm(name + ".bn", cout);
}

void add_residual_block(ModelInstance& m, Rng& rng, const std::string& name, std::int64_t cout,
                        std::int64_t cin) {
  add_conv_bn(m, rng, name + ".a", cout, cin, 3);
  add_conv_bn(m, rng, name + ".b", cout, cout, 3);
  add_conv_bn(m, rng, name + ".proj", cout, cin, 1);
}

std::int64_t round_half_up(double v) { return static_cast<std::int64_t>(std::floor(v + 0.5)); }

// Recording context shared by both forward entry points.
struct Recorder {
  const ModelInstance& model;
  Tape& tape;
  ForwardMode mode;
  ModelInstance* mutable_model;  // non-null only in training mode
  std::vector<Var>* leaves;

  Var param(const std::string& name) {
    const auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Parameter& p = params[i];
      if (p.name != name) continue;
      if (mode == ForwardMode::kTrain && p.trainable) {
        Var v = tape.input(p.value);
        if (leaves) {
          leaves->resize(params.size());
          (*leaves)[i] = v;
        }
        return v;
      }
      return tape.constant(p.value);
    }
    throw Error("model has no parameter '" + name + "'");
  }

  Var conv_bn(const Var& x, const std::string& name, int stride, int pad, bool relu) {
    Var w = param(name + ".w");
    Var y = ops::conv2d(x, w, stride, pad);
    Var scale = param(name + ".bn.scale");
    Var shift = param(name + ".bn.shift");
    if (mode == ForwardMode::kTrain) {
      y = ops::batch_norm(y, scale, shift, mutable_model->bn(name + ".bn"), true);
    } else {
      BatchNormState frozen = model.bn(name + ".bn");
      y = ops::batch_norm(y, scale, shift, frozen, false);
    }
    return relu ? ops::relu(y) : y;
  }

  Var residual(const Var& x, const std::string& name, int stride) {
    Var a = conv_bn(x, name + ".a", stride, 1, true);
    Var b = conv_bn(a, name + ".b", 1, 1, false);
    Var s = conv_bn(x, name + ".proj", stride, 0, false);
    return ops::relu(ops::add(b, s));
  }

  ForwardOutput run(const Var& images) {
    const auto& shape = images.shape();
    if (shape.size() != 4 || shape[1] != 3 || shape[2] % 8 != 0 || shape[3] % 8 != 0) {
      throw Error("model input must be [N,3,H,W] with H, W multiples of 8, got " + to_string(shape));
    }
    ForwardOutput out;
    Var centered = ops::add_scalar(images, -spectral::kDefaultLevelShift);
    Var init;
    if (model.spec().variant == Variant::kBaseline) {
      Var h = conv_bn(centered, "stem.1", 2, 1, true);
      h = conv_bn(h, "stem.2", 2, 1, true);
      init = conv_bn(h, "stem.3", 2, 1, true);
    } else {
      init = ops::conv2d(centered, param("stem.w"), spectral::kBlock, 0);
    }
    out.probes[0] = init;
    out.probes[1] = residual(init, "conv1", 1);
    out.probes[2] = residual(out.probes[1], "conv2", 2);
    Var pooled = ops::global_avg_pool(out.probes[2]);
    Var fc_w = param("fc.w");
    Var fc_b = param("fc.b");
    out.logits = ops::linear(pooled, fc_w, fc_b);
    out.probes[3] = out.logits;
    return out;
  }
};

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kSF: return "SF";
    case Variant::kC88: return "C88";
    case Variant::kBaseline: return "Baseline";
    case Variant::kInterp: return "Interp";
    case Variant::kSubst: return "Subst";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "sf") return Variant::kSF;
  if (s == "c88") return Variant::kC88;
  if (s == "baseline") return Variant::kBaseline;
  if (s == "interp") return Variant::kInterp;
  if (s == "subst") return Variant::kSubst;
  throw Error("unknown model variant '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
  if (num_classes < 2) throw Error("num_classes must be at least 2");
  if (height <= 0 || width <= 0 || height % 8 != 0 || width % 8 != 0) {
    throw Error("input extents " + std::to_string(height) + "x" + std::to_string(width) +
                " must be positive multiples of 8");
  }
  if (height < 16 || width < 16) throw Error("input extents must be at least 16x16");
  if ((variant == Variant::kInterp || variant == Variant::kSubst) && !(mix >= 0.0f && mix <= 1.0f)) {
    throw Error("mixing coefficient must lie in [0,1], got " + std::to_string(mix));
  }
}

std::string ModelSpec::label() const {
  std::ostringstream os;
  os << variant_name(variant);
  if (variant == Variant::kInterp || variant == Variant::kSubst) os << '(' << mix << ')';
  return os.str();
}

int substituted_channel_count(float beta) {
  if (!(beta >= 0.0f && beta <= 1.0f)) throw Error("beta must lie in [0,1]");
  return static_cast<int>(round_half_up(static_cast<double>(beta) * kStemChannels));
}

std::string_view probe_name(Probe p) {
  switch (p) {
    case Probe::kInit: return "INIT";
    case Probe::kConv1: return "CONV1";
    case Probe::kConv2: return "CONV2";
    case Probe::kFc: return "FC";
  }
  return "?";
}

std::int64_t Parameter::trainable_count() const {
  if (!trainable) return 0;
  if (frozen_rows.empty()) return value.numel();
  const auto per_row = value.numel() / value.dim(0);
  std::int64_t n = 0;
  for (auto f : frozen_rows) n += f ? 0 : per_row;
  return n;
}

Parameter& ModelInstance::param(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw Error("model has no parameter '" + std::string(name) + "'");
}

const Parameter& ModelInstance::param(std::string_view name) const {
  return const_cast<ModelInstance*>(this)->param(name);
}

BatchNormState& ModelInstance::bn(std::string_view name) {
  for (auto& b : bns_) {
    if (b.name == name) return b.state;
  }
  throw Error("model has no batch-norm layer '" + std::string(name) + "'");
}

const BatchNormState& ModelInstance::bn(std::string_view name) const {
  return const_cast<ModelInstance*>(this)->bn(name);
}

const Tensor& ModelInstance::stem_kernels() const {
  if (spec_.variant == Variant::kBaseline) return param("stem.3.w").value;
  return param("stem.w").value;
}

std::int64_t ModelInstance::trainable_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.trainable_count();
  return n;
}

Parameter& ModelInstance::add_parameter(std::string name, Tensor value, bool trainable) {
  params_.push_back(Parameter{std::move(name), std::move(value), trainable, {}});
  return params_.back();
}

BatchNormState& ModelInstance::add_batch_norm(std::string name, std::int64_t channels) {
  bns_.push_back(NamedBatchNorm{std::move(name), BatchNormState(channels)});
  return bns_.back().state;
}

Tensor c88_stem_init(std::uint64_t seed) {
  Rng rng = stream(seed, kStemStream);
  return conv_init(rng, kStemChannels, spectral::kColors, spectral::kBlock);
}

Tensor make_interpolated_kernels(const Tensor& sf, const Tensor& c88, float alpha) {
  if (sf.shape() != c88.shape()) {
    throw Error("interpolation shape mismatch: " + to_string(sf.shape()) + " vs " + to_string(c88.shape()));
  }
  if (!(alpha >= 0.0f && alpha <= 1.0f)) throw Error("alpha must lie in [0,1]");
  if (alpha == 0.0f) return c88;
  if (alpha == 1.0f) return sf;
  Tensor out(sf.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = alpha * sf[i] + (1.0f - alpha) * c88[i];
  return out;
}

Tensor make_substituted_kernels(const Tensor& sf, const Tensor& c88, float beta) {
  if (sf.shape() != c88.shape()) {
    throw Error("substitution shape mismatch: " + to_string(sf.shape()) + " vs " + to_string(c88.shape()));
  }
  const int cut = substituted_channel_count(beta);
  Tensor out = c88;
  const auto per = sf.numel() / sf.dim(0);
  std::copy(sf.raw(), sf.raw() + cut * per, out.raw());
  return out;
}

ModelInstance build_model(const ModelSpec& spec) {
  spec.validate();
  ModelInstance m(spec);
  const Tensor& sf = spectral::sf_kernel_bank().weights;

  switch (spec.variant) {
    case Variant::kSF:
      m.add_parameter("stem.w", sf, false);
      break;
    case Variant::kC88:
      m.add_parameter("stem.w", c88_stem_init(spec.seed));
      break;
    case Variant::kInterp: {
      const bool frozen = spec.mix == 1.0f;
      m.add_parameter("stem.w", make_interpolated_kernels(sf, c88_stem_init(spec.seed), spec.mix), !frozen);
      break;
    }
    case Variant::kSubst: {
      const int cut = substituted_channel_count(spec.mix);
      auto& p = m.add_parameter("stem.w", make_substituted_kernels(sf, c88_stem_init(spec.seed), spec.mix),
                                cut < kStemChannels);
      if (cut > 0 && cut < kStemChannels) {
        p.frozen_rows.assign(static_cast<std::size_t>(kStemChannels), 0);
        std::fill(p.frozen_rows.begin(), p.frozen_rows.begin() + cut, 1);
      }
      break;
    }
    case Variant::kBaseline: {
      Rng rng = stream(spec.seed, kBaselineStream);
      add_conv_bn(m, rng, "stem.1", 24, 3, 3);
      add_conv_bn(m, rng, "stem.2", 96, 24, 3);
      add_conv_bn(m, rng, "stem.3", kStemChannels, 96, 3);
      break;
    }
  }

  Rng rng = stream(spec.seed, kBackboneStream);
  add_residual_block(m, rng, "conv1", kWidth, kStemChannels);
  add_residual_block(m, rng, "conv2", kWidth, kWidth);
  m.add_parameter("fc.w", glorot_init(rng, Shape{spec.num_classes, kWidth}, kWidth, spec.num_classes));
  m.add_parameter("fc.b", Tensor(Shape{spec.num_classes}, 0.0f));
  return m;
}

ForwardOutput forward(ModelInstance& model, Tape& tape, const Var& images, ForwardMode mode,
                      std::vector<Var>* trainable_leaves) {
  Recorder r{model, tape, mode, &model, trainable_leaves};
  return r.run(images);
}

ForwardOutput forward_eval(const ModelInstance& model, Tape& tape, const Var& images) {
  Recorder r{model, tape, ForwardMode::kEval, nullptr, nullptr};
  return r.run(images);
}

namespace {

template <typename Fn>
void for_each_chunk(std::int64_t n, Fn&& fn) {
  const std::int64_t chunks = (n + kEvalChunk - 1) / kEvalChunk;
  parallel_for(chunks, [&](std::int64_t c) {
    const std::int64_t b = c * kEvalChunk;
    fn(b, std::min(n, b + kEvalChunk));
  });
}

}  // namespace

ProbedForward forward_with_probes(const ModelInstance& model, const Tensor& images) {
  const auto n = images.dim(0);
  const std::int64_t chunks = (n + kEvalChunk - 1) / kEvalChunk;
  std::vector<ProbedForward> parts(static_cast<std::size_t>(chunks));
  for_each_chunk(n, [&](std::int64_t b, std::int64_t e) {
    Tape tape;
    auto out = forward_eval(model, tape, tape.constant(images.slice0(b, e)));
    auto& part = parts[static_cast<std::size_t>(b / kEvalChunk)];
    part.logits = out.logits.value();
    for (std::size_t p = 0; p < 4; ++p) part.probes[p] = out.probes[p].value();
  });
  ProbedForward result;
  std::vector<Tensor> pieces;
  for (auto& p : parts) pieces.push_back(std::move(p.logits));
  result.logits = concat0(pieces);
  for (std::size_t probe = 0; probe < 4; ++probe) {
    pieces.clear();
    for (auto& p : parts) pieces.push_back(std::move(p.probes[probe]));
    result.probes[probe] = concat0(pieces);
  }
  return result;
}

Tensor predict_logits(const ModelInstance& model, const Tensor& images) {
  const auto n = images.dim(0);
  const std::int64_t chunks = (n + kEvalChunk - 1) / kEvalChunk;
  std::vector<Tensor> parts(static_cast<std::size_t>(chunks));
  for_each_chunk(n, [&](std::int64_t b, std::int64_t e) {
    Tape tape;
    parts[static_cast<std::size_t>(b / kEvalChunk)] =
        forward_eval(model, tape, tape.constant(images.slice0(b, e))).logits.value();
  });
  return concat0(parts);
}

std::vector<int> predict(const ModelInstance& model, const Tensor& images) {
  return argmax_rows(predict_logits(model, images));
}

float evaluate(const ModelInstance& model, const Dataset& data) {
  if (data.empty()) throw Error("evaluate: empty dataset");
  const auto pred = predict(model, data.images);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  return static_cast<float>(static_cast<double>(correct) / static_cast<double>(data.size()));
}

}  // namespace sflab
