#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sflab/dataset.hpp"
#include "sflab/rng.hpp"

namespace sflab {

enum class DataSource { kCifar10Binary, kSynthetic };

std::string_view source_name(DataSource s);
DataSource parse_source(std::string_view name);

struct DatasetManifest {
  DataSource source = DataSource::kSynthetic;
  std::vector<std::filesystem::path> paths;  // cifar10-binary batch files
  std::int64_t count = 2000;                 // 0 = every record (cifar only)
  int height = 32;
  int width = 32;
  int num_classes = 10;
  std::array<double, 3> split{0.8, 0.1, 0.1};  // train / val / test
  std::uint64_t seed = 0;
  float noise = 0.03f;   // synthetic pixel noise std
  float signal = 0.1f;   // synthetic class pattern amplitude
  float clutter = 0.8f;  // synthetic per-image clutter scale

  void validate() const;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Index assignment for a split: seeded shuffle, then floor(fraction * n)
/// items for val and test; the remainder goes to train.
struct SplitIndices {
  std::vector<std::int64_t> train, val, test;
};
SplitIndices split_indices(std::int64_t n, const std::array<double, 3>& fractions, std::uint64_t seed);

DatasetSplits load_dataset(const DatasetManifest& manifest);

/// Parses CIFAR-10 binary records: 1 label byte then 3072 channel-major pixel
/// bytes (R plane, G plane, B plane; 32x32 row-major each). `limit` = 0
/// reads every record.
Dataset read_cifar10_binary(const std::filesystem::path& path, std::int64_t limit = 0);
/// Writes a 32x32 dataset in the same format; pixels are rounded to bytes.
void write_cifar10_binary(const Dataset& data, const std::filesystem::path& path);

inline constexpr std::int64_t kCifarRecordBytes = 3073;

/// Seeded synthetic classification set. Each class owns a block-DCT pattern
/// on zigzag ranks 0..9, repeated in every 8x8 block with amplitude
/// `signal`. An image adds independent per-block clutter on all 64 ranks
/// (std `clutter` / sqrt(1 + rank)) and Gaussian pixel noise, then clamps
/// to [0,1].
struct SyntheticConfig {
  std::int64_t count = 2000;
  int num_classes = 10;
  int height = 32;
  int width = 32;
  float noise = 0.03f;
  std::uint64_t seed = 0;
  float signal = 0.1f;
  float clutter = 0.8f;
};
Dataset make_synthetic(const SyntheticConfig& config);
/// The noiseless class patterns [K,3,H,W] used by make_synthetic.
Tensor synthetic_prototypes(const SyntheticConfig& config);

}  // namespace sflab
