#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "sflab/data.hpp"
#include "sflab/spectral.hpp"

namespace sflab {

Dataset Dataset::subset(std::span<const std::int64_t> indices) const {
  Dataset d;
  d.images = images.gather0(indices);
  d.num_classes = num_classes;
  for (auto i : indices) d.labels.push_back(labels[static_cast<std::size_t>(i)]);
  return d;
}

Dataset Dataset::slice(std::int64_t begin, std::int64_t end) const {
  Dataset d;
  d.images = images.slice0(begin, end);
  d.labels.assign(labels.begin() + begin, labels.begin() + end);
  d.num_classes = num_classes;
  return d;
}

void Dataset::validate() const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw Error("dataset images must be [N,3,H,W], got " + to_string(images.shape()));
  }
  if (images.dim(0) != size()) {
    throw Error("dataset has " + std::to_string(images.dim(0)) + " images but " +
                std::to_string(size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw Error("label " + std::to_string(y) + " outside [0, num_classes)");
  }
}

std::string_view source_name(DataSource s) {
  return s == DataSource::kSynthetic ? "synthetic" : "cifar10-binary";
}

DataSource parse_source(std::string_view name) {
  if (name == "synthetic") return DataSource::kSynthetic;
  if (name == "cifar10-binary") return DataSource::kCifar10Binary;
  throw Error("unknown dataset source '" + std::string(name) + "'");
}

void DatasetManifest::validate() const {
  const double total = split[0] + split[1] + split[2];
  if (std::abs(total - 1.0) > 1e-9) throw Error("split fractions must sum to 1");
  for (double f : split) {
    if (f < 0.0) throw Error("split fractions must be non-negative");
  }
  if (count < 0) throw Error("item count must be non-negative");
  if (num_classes < 2) throw Error("need at least 2 classes");
  if (source == DataSource::kSynthetic) {
    if (count == 0) throw Error("synthetic datasets need a positive item count");
    if (height % 8 != 0 || width % 8 != 0 || height <= 0 || width <= 0) {
      throw Error("synthetic extents must be positive multiples of 8");
    }
  } else {
    if (paths.empty()) throw Error("cifar10-binary source needs at least one file path");
    for (const auto& p : paths) {
      if (!std::filesystem::exists(p)) throw Error("dataset file not found: " + p.string());
    }
  }
}

SplitIndices split_indices(std::int64_t n, const std::array<double, 3>& fractions, std::uint64_t seed) {
  Rng rng(seed);
  const auto perm = rng.permutation(n);
  const auto n_val = static_cast<std::int64_t>(std::floor(fractions[1] * static_cast<double>(n) + 1e-9));
  const auto n_test = static_cast<std::int64_t>(std::floor(fractions[2] * static_cast<double>(n) + 1e-9));
  const auto n_train = n - n_val - n_test;
  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  s.test.assign(perm.begin() + n_train + n_val, perm.end());
  return s;
}

Dataset read_cifar10_binary(const std::filesystem::path& path, std::int64_t limit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw Error(path.string() + ": truncated CIFAR-10 file (" + std::to_string(bytes.size()) +
                " bytes is not a positive multiple of 3073)");
  }
  auto n = static_cast<std::int64_t>(bytes.size()) / kCifarRecordBytes;
  if (limit > 0) n = std::min(n, limit);
  Dataset d;
  d.num_classes = 10;
  d.images = Tensor(Shape{n, 3, 32, 32});
  for (std::int64_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * kCifarRecordBytes;
    if (rec[0] > 9) throw Error(path.string() + ": record " + std::to_string(i) + " has label " + std::to_string(rec[0]));
    d.labels.push_back(rec[0]);
    float* dst = d.images.raw() + i * 3072;
    for (int k = 0; k < 3072; ++k) dst[k] = static_cast<float>(rec[1 + k]) / 255.0f;
  }
  return d;
}

void write_cifar10_binary(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  if (data.height() != 32 || data.width() != 32) throw Error("CIFAR-10 binary format requires 32x32 images");
  if (data.num_classes > 256) throw Error("CIFAR-10 binary format stores labels in one byte");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(data.size() * kCifarRecordBytes));
  for (std::int64_t i = 0; i < data.size(); ++i) {
    unsigned char* rec = bytes.data() + i * kCifarRecordBytes;
    rec[0] = static_cast<unsigned char>(data.labels[static_cast<std::size_t>(i)]);
    const float* src = data.images.raw() + i * 3072;
    for (int k = 0; k < 3072; ++k) {
      rec[1 + k] = static_cast<unsigned char>(std::lround(std::clamp(src[k], 0.0f, 1.0f) * 255.0f));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

namespace {

constexpr int kPatternRanks = 10;  // zigzag ranks 0..9
constexpr std::uint64_t kPrototypeStream = 0x50524F54ULL;

Tensor pattern_coefficients(const SyntheticConfig& config) {
  using namespace spectral;
  Rng rng(config.seed ^ kPrototypeStream);
  rng = rng.split();
  Tensor coeffs(Shape{config.num_classes, kChannels, config.height / kBlock, config.width / kBlock}, 0.0f);
  for (int c = 0; c < config.num_classes; ++c) {
    for (int z = 0; z < kPatternRanks; ++z) {
      for (int color = 0; color < kColors; ++color) {
        const float v = config.signal * rng.normal();
        for (std::int64_t by = 0; by < coeffs.dim(2); ++by) {
          for (std::int64_t bx = 0; bx < coeffs.dim(3); ++bx) coeffs.at(c, channel_index(z, color), by, bx) = v;
        }
      }
    }
  }
  return coeffs;
}

// Clutter amplitude falls off roughly like 1/frequency, as in natural images.
float clutter_falloff(int rank) { return 1.0f / std::sqrt(1.0f + static_cast<float>(rank)); }

}  // namespace

Tensor synthetic_prototypes(const SyntheticConfig& config) {
  return spectral::block_dct_inverse(pattern_coefficients(config), spectral::kDefaultLevelShift,
                                     /*clamp=*/false);
}

Dataset make_synthetic(const SyntheticConfig& config) {
  using namespace spectral;
  if (config.count <= 0 || config.num_classes < 2) throw Error("synthetic set needs count > 0 and >= 2 classes");
  if (config.height % 8 != 0 || config.width % 8 != 0) throw Error("synthetic extents must be multiples of 8");
  if (!(config.noise >= 0.0f) || !(config.signal >= 0.0f) || !(config.clutter >= 0.0f)) {
    throw Error("synthetic noise, signal and clutter must be non-negative");
  }
  const Tensor patterns = pattern_coefficients(config);
  const auto per = patterns.numel() / config.num_classes;
  const auto bh = patterns.dim(2), bw = patterns.dim(3);
  Rng rng(config.seed);
  Dataset d;
  d.num_classes = config.num_classes;
  Tensor coeffs(Shape{config.count, kChannels, bh, bw}, 0.0f);
  for (std::int64_t i = 0; i < config.count; ++i) {
    const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.num_classes)));
    d.labels.push_back(label);
    float* dst = coeffs.raw() + i * per;
    std::copy_n(patterns.raw() + label * per, per, dst);
    for (int z = 0; z < kFrequencies; ++z) {
      const float scale = config.clutter * clutter_falloff(z);
      for (int color = 0; color < kColors; ++color) {
        float* plane = dst + channel_index(z, color) * bh * bw;
        for (std::int64_t k = 0; k < bh * bw; ++k) plane[k] += scale * rng.normal();
      }
    }
  }
  d.images = block_dct_inverse(coeffs, kDefaultLevelShift, /*clamp=*/false);
  for (auto& v : d.images.data()) v = std::clamp(v + config.noise * rng.normal(), 0.0f, 1.0f);
  return d;
}

DatasetSplits load_dataset(const DatasetManifest& manifest) {
  manifest.validate();
  Dataset all;
  if (manifest.source == DataSource::kSynthetic) {
    all = make_synthetic(SyntheticConfig{manifest.count, manifest.num_classes, manifest.height,
                                         manifest.width, manifest.noise, manifest.seed,
                                         manifest.signal, manifest.clutter});
  } else {
    std::vector<Dataset> parts;
    std::int64_t remaining = manifest.count;
    for (const auto& p : manifest.paths) {
      if (manifest.count > 0 && remaining <= 0) break;
      parts.push_back(read_cifar10_binary(p, manifest.count > 0 ? remaining : 0));
      remaining -= parts.back().size();
    }
    std::vector<Tensor> imgs;
    for (auto& part : parts) {
      imgs.push_back(std::move(part.images));
      all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
    }
    all.images = spectral::resize_to_block_multiple(concat0(imgs));
    all.num_classes = 10;
  }
  const auto s = split_indices(all.size(), manifest.split, manifest.seed);
  return DatasetSplits{all.subset(s.train), all.subset(s.val), all.subset(s.test)};
}

}  // namespace sflab
