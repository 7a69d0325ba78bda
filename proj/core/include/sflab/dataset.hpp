#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sflab/tensor.hpp"

namespace sflab {

/// Labeled image set: images [N,3,H,W] with pixels in [0,1].
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int num_classes = 0;

  std::int64_t size() const noexcept { return static_cast<std::int64_t>(labels.size()); }
  bool empty() const noexcept { return labels.empty(); }
  std::int64_t height() const { return images.dim(2); }
  std::int64_t width() const { return images.dim(3); }

  Dataset subset(std::span<const std::int64_t> indices) const;
  Dataset slice(std::int64_t begin, std::int64_t end) const;
  /// Throws unless images are [N,3,H,W], labels match N and lie in range.
  void validate() const;
};

}  // namespace sflab
