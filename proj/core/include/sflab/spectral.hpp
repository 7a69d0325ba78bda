#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "sflab/tensor.hpp"

namespace sflab::spectral {

inline constexpr int kBlock = 8;
inline constexpr int kFrequencies = kBlock * kBlock;
inline constexpr int kColors = 3;
inline constexpr int kChannels = kColors * kFrequencies;  // 192
inline constexpr float kDefaultLevelShift = 0.5f;

/// The 64 orthonormal 8x8 DCT-II basis matrices, in f64.
///   K[u][v](x, y) = c(u) c(v) / 4 * cos((2x+1) u pi / 16) * cos((2y+1) v pi / 16)
/// with c(0) = 1/sqrt(2) and c(k) = 1 otherwise. x is the row inside the
/// block and pairs with u; y is the column and pairs with v.
class DctKernelTable {
 public:
  double operator()(int u, int v, int x, int y) const {
    return values_[static_cast<std::size_t>(((u * kBlock + v) * kBlock + x) * kBlock + y)];
  }
  static double normalizer(int u);

 private:
  friend DctKernelTable build_dct_kernels();
  std::array<double, kFrequencies * kFrequencies> values_{};
};

DctKernelTable build_dct_kernels();

/// Inner product of two basis matrices, summed over all 64 cells.
double basis_inner_product(const DctKernelTable& table, int u, int v, int u2, int v2);

/// JPEG zigzag: rank 0 is (0,0), rank 1 is (0,1), then serpentine along
/// anti-diagonals to (7,7).
class ZigzagOrder {
 public:
  std::pair<int, int> frequency(int rank) const { return order_[static_cast<std::size_t>(rank)]; }
  int rank(int u, int v) const { return rank_[static_cast<std::size_t>(u * kBlock + v)]; }

 private:
  friend ZigzagOrder zigzag_order();
  std::array<std::pair<int, int>, kFrequencies> order_{};
  std::array<int, kFrequencies> rank_{};
};

ZigzagOrder zigzag_order();
/// Process-wide instance of zigzag_order().
const ZigzagOrder& canonical_zigzag();

/// Channel index of color `color` at zigzag rank `rank` (frequency-major).
constexpr int channel_index(int rank, int color) { return kColors * rank + color; }

/// Fixed SF-layer convolution weights [192, 3, 8, 8]. Filter 3z+c holds
/// K^{u(z),v(z)} in color plane c and zeros in the other two planes.
struct KernelBank {
  Tensor weights;
};

KernelBank build_sf_kernel_bank(const DctKernelTable& table, const ZigzagOrder& order);
/// Bank built from the canonical table and order (cached).
const KernelBank& sf_kernel_bank();

/// [N,3,H,W] pixels -> [N,192,H/8,W/8] coefficients. Each 8x8 block of each
/// color is transformed after subtracting `level_shift`. H and W must be
/// multiples of 8 (see resize_to_block_multiple).
Tensor block_dct_forward(const Tensor& image, float level_shift = kDefaultLevelShift);

/// Exact inverse of block_dct_forward; optionally clamps pixels to [0, 1].
Tensor block_dct_inverse(const Tensor& freq, float level_shift = kDefaultLevelShift,
                         bool clamp = false);

/// Forward transform without the level shift. The adjoint of
/// block_dct_inverse; used to pull pixel gradients back to coefficients.
Tensor block_dct_linear(const Tensor& image);

enum class Reconstruction { kLowFrequency, kHighFrequency };

/// LFR keeps only the three DC channels; HFR zeroes them and keeps the rest.
Tensor frequency_reconstruct(const Tensor& image, Reconstruction mode,
                             float level_shift = kDefaultLevelShift, bool clamp = true);

/// Worst-case pixel change from an l-inf frequency perturbation of radius
/// eps_f: eps_f * max_{x,y} sum_{u,v} |K[u][v](x,y)|.
float max_pixel_deviation(float eps_f);

/// Nearest-neighbor downsize to the largest contained multiples of 8.
Tensor resize_to_block_multiple(const Tensor& image);

}  // namespace sflab::spectral
