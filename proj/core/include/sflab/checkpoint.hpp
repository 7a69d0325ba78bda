#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "sflab/analysis.hpp"
#include "sflab/models.hpp"

namespace sflab {

inline constexpr const char* kCheckpointFormat = "sflab-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Free-form training metadata stored next to the weights.
using CheckpointMetadata = std::map<std::string, std::string>;

/// A checkpoint is a directory holding manifest.json plus one raw
/// little-endian f32 blob per tensor (parameters and batch-norm running
/// statistics). Existing contents with the same names are overwritten.
void save_checkpoint(const ModelInstance& model, const std::filesystem::path& dir,
                     const CheckpointMetadata& metadata = {});

struct LoadedCheckpoint {
  ModelInstance model;
  CheckpointMetadata metadata;
};

/// Rebuilds the model from its stored spec and overwrites every tensor.
/// Throws on a format or version mismatch, a missing or extra tensor, a
/// shape mismatch, or a blob whose byte length disagrees with its shape.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// Detector trees are stored as a single JSON file.
void save_detector(const DetectorModel& detector, const std::filesystem::path& path);
DetectorModel load_detector(const std::filesystem::path& path);

}  // namespace sflab
