#include "sflab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sflab::spectral {

double DctKernelTable::normalizer(int u) { return u == 0 ? 1.0 / std::numbers::sqrt2 : 1.0; }

DctKernelTable build_dct_kernels() {
  DctKernelTable t;
  for (int u = 0; u < kBlock; ++u) {
    for (int v = 0; v < kBlock; ++v) {
      const double c = DctKernelTable::normalizer(u) * DctKernelTable::normalizer(v) / 4.0;
      for (int x = 0; x < kBlock; ++x) {
        for (int y = 0; y < kBlock; ++y) {
          t.values_[static_cast<std::size_t>(((u * kBlock + v) * kBlock + x) * kBlock + y)] =
              c * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0) *
              std::cos((2 * y + 1) * v * std::numbers::pi / 16.0);
        }
      }
    }
  }
  return t;
}

double basis_inner_product(const DctKernelTable& table, int u, int v, int u2, int v2) {
  double s = 0.0;
  for (int x = 0; x < kBlock; ++x) {
    for (int y = 0; y < kBlock; ++y) s += table(u, v, x, y) * table(u2, v2, x, y);
  }
  return s;
}

ZigzagOrder zigzag_order() {
  ZigzagOrder z;
  int rank = 0;
  for (int s = 0; s <= 2 * (kBlock - 1); ++s) {
    const int lo = std::max(0, s - (kBlock - 1));
    const int hi = std::min(s, kBlock - 1);
    for (int i = 0; i <= hi - lo; ++i) {
      // Even diagonals run bottom-left to top-right, odd ones the reverse.
      const int u = (s % 2 == 0) ? hi - i : lo + i;
      const int v = s - u;
      z.order_[static_cast<std::size_t>(rank)] = {u, v};
      z.rank_[static_cast<std::size_t>(u * kBlock + v)] = rank;
      ++rank;
    }
  }
  return z;
}

KernelBank build_sf_kernel_bank(const DctKernelTable& table, const ZigzagOrder& order) {
  Tensor w(Shape{kChannels, kColors, kBlock, kBlock}, 0.0f);
  for (int z = 0; z < kFrequencies; ++z) {
    const auto [u, v] = order.frequency(z);
    for (int color = 0; color < kColors; ++color) {
      const int f = channel_index(z, color);
      for (int x = 0; x < kBlock; ++x) {
        for (int y = 0; y < kBlock; ++y) w.at(f, color, x, y) = static_cast<float>(table(u, v, x, y));
      }
    }
  }
  return KernelBank{std::move(w)};
}

const KernelBank& sf_kernel_bank() {
  static const KernelBank bank = build_sf_kernel_bank(build_dct_kernels(), zigzag_order());
  return bank;
}

namespace {

// 1-D basis C[u][x] = c(u)/2 cos((2x+1) u pi / 16); K[u][v](x,y) = C[u][x] C[v][y].
struct Basis1d {
  std::array<float, kFrequencies> c{};
  Basis1d() {
    for (int u = 0; u < kBlock; ++u) {
      for (int x = 0; x < kBlock; ++x) {
        c[static_cast<std::size_t>(u * kBlock + x)] = static_cast<float>(
            DctKernelTable::normalizer(u) / 2.0 * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0));
      }
    }
  }
  float operator()(int u, int x) const { return c[static_cast<std::size_t>(u * kBlock + x)]; }
};

const Basis1d& basis1d() {
  static const Basis1d b;
  return b;
}

struct BlockGeometry {
  std::int64_t n, h, w, bh, bw;
};

BlockGeometry image_geometry(const Tensor& image) {
  if (image.rank() != 4 || image.dim(1) != kColors) {
    throw Error("block DCT expects [N,3,H,W] images, got " + to_string(image.shape()));
  }
  const auto h = image.dim(2), w = image.dim(3);
  if (h % kBlock != 0 || w % kBlock != 0) {
    throw Error("image extents " + std::to_string(h) + "x" + std::to_string(w) +
                " are not multiples of 8; resize with spectral::resize_to_block_multiple first");
  }
  return {image.dim(0), h, w, h / kBlock, w / kBlock};
}

Tensor forward_impl(const Tensor& image, float level_shift) {
  const auto g = image_geometry(image);
  const auto& b = basis1d();
  const auto& zz = canonical_zigzag();
  Tensor out(Shape{g.n, kChannels, g.bh, g.bw});
  float block[kBlock][kBlock];
  float tmp[kBlock][kBlock];
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (int color = 0; color < kColors; ++color) {
      const float* plane = image.raw() + (n * kColors + color) * g.h * g.w;
      for (std::int64_t by = 0; by < g.bh; ++by) {
        for (std::int64_t bx = 0; bx < g.bw; ++bx) {
          for (int x = 0; x < kBlock; ++x) {
            for (int y = 0; y < kBlock; ++y) {
              block[x][y] = plane[(by * kBlock + x) * g.w + bx * kBlock + y] - level_shift;
            }
          }
          // tmp[u][y] = sum_x C[u][x] B[x][y]
          for (int u = 0; u < kBlock; ++u) {
            for (int y = 0; y < kBlock; ++y) {
              float s = 0.0f;
              for (int x = 0; x < kBlock; ++x) s += b(u, x) * block[x][y];
              tmp[u][y] = s;
            }
          }
          // D[u][v] = sum_y tmp[u][y] C[v][y]
          for (int u = 0; u < kBlock; ++u) {
            for (int v = 0; v < kBlock; ++v) {
              float s = 0.0f;
              for (int y = 0; y < kBlock; ++y) s += tmp[u][y] * b(v, y);
              const int ch = channel_index(zz.rank(u, v), color);
              out[((n * kChannels + ch) * g.bh + by) * g.bw + bx] = s;
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

const ZigzagOrder& canonical_zigzag() {
  static const ZigzagOrder z = zigzag_order();
  return z;
}

Tensor block_dct_forward(const Tensor& image, float level_shift) {
  return forward_impl(image, level_shift);
}

Tensor block_dct_linear(const Tensor& image) { return forward_impl(image, 0.0f); }

Tensor block_dct_inverse(const Tensor& freq, float level_shift, bool clamp) {
  if (freq.rank() != 4 || freq.dim(1) != kChannels) {
    throw Error("block_dct_inverse expects [N,192,H/8,W/8], got " + to_string(freq.shape()));
  }
  const auto n_items = freq.dim(0), bh = freq.dim(2), bw = freq.dim(3);
  const auto h = bh * kBlock, w = bw * kBlock;
  const auto& b = basis1d();
  const auto& zz = canonical_zigzag();
  Tensor out(Shape{n_items, kColors, h, w});
  float d[kBlock][kBlock];
  float tmp[kBlock][kBlock];
  for (std::int64_t n = 0; n < n_items; ++n) {
    for (int color = 0; color < kColors; ++color) {
      float* plane = out.raw() + (n * kColors + color) * h * w;
      for (std::int64_t by = 0; by < bh; ++by) {
        for (std::int64_t bx = 0; bx < bw; ++bx) {
          for (int u = 0; u < kBlock; ++u) {
            for (int v = 0; v < kBlock; ++v) {
              const int ch = channel_index(zz.rank(u, v), color);
              d[u][v] = freq[((n * kChannels + ch) * bh + by) * bw + bx];
            }
          }
          // tmp[x][v] = sum_u C[u][x] D[u][v]
          for (int x = 0; x < kBlock; ++x) {
            for (int v = 0; v < kBlock; ++v) {
              float s = 0.0f;
              for (int u = 0; u < kBlock; ++u) s += b(u, x) * d[u][v];
              tmp[x][v] = s;
            }
          }
          for (int x = 0; x < kBlock; ++x) {
            for (int y = 0; y < kBlock; ++y) {
              float s = 0.0f;
              for (int v = 0; v < kBlock; ++v) s += tmp[x][v] * b(v, y);
              s += level_shift;
              if (clamp) s = std::clamp(s, 0.0f, 1.0f);
              plane[(by * kBlock + x) * w + bx * kBlock + y] = s;
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor frequency_reconstruct(const Tensor& image, Reconstruction mode, float level_shift,
                             bool clamp) {
  Tensor f = block_dct_forward(image, level_shift);
  const auto n = f.dim(0), hw = f.dim(2) * f.dim(3);
  for (std::int64_t i = 0; i < n; ++i) {
    for (int ch = 0; ch < kChannels; ++ch) {
      const bool is_dc = ch < kColors;
      const bool keep = (mode == Reconstruction::kLowFrequency) ? is_dc : !is_dc;
      if (keep) continue;
      float* p = f.raw() + (i * kChannels + ch) * hw;
      std::fill(p, p + hw, 0.0f);
    }
  }
  return block_dct_inverse(f, level_shift, clamp);
}

float max_pixel_deviation(float eps_f) {
  if (!(eps_f >= 0.0f)) throw Error("max_pixel_deviation requires eps_f >= 0");
  static const double worst = [] {
    const auto table = build_dct_kernels();
    double best = 0.0;
    for (int x = 0; x < kBlock; ++x) {
      for (int y = 0; y < kBlock; ++y) {
        double s = 0.0;
        for (int u = 0; u < kBlock; ++u) {
          for (int v = 0; v < kBlock; ++v) s += std::abs(table(u, v, x, y));
        }
        best = std::max(best, s);
      }
    }
    return best;
  }();
  return static_cast<float>(static_cast<double>(eps_f) * worst);
}

Tensor resize_to_block_multiple(const Tensor& image) {
  if (image.rank() != 4) throw Error("resize expects [N,C,H,W], got " + to_string(image.shape()));
  const auto n = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
  const auto h2 = (h / kBlock) * kBlock, w2 = (w / kBlock) * kBlock;
  if (h2 == 0 || w2 == 0) throw Error("image " + to_string(image.shape()) + " is smaller than one 8x8 block");
  if (h2 == h && w2 == w) return image;
  Tensor out(Shape{n, c, h2, w2});
  for (std::int64_t i = 0; i < n * c; ++i) {
    const float* src = image.raw() + i * h * w;
    float* dst = out.raw() + i * h2 * w2;
    for (std::int64_t y = 0; y < h2; ++y) {
      // Sample at the source pixel whose center is nearest the target center.
      const auto sy = std::min(h - 1, static_cast<std::int64_t>((2 * y + 1) * h / (2 * h2)));
      for (std::int64_t x = 0; x < w2; ++x) {
        const auto sx = std::min(w - 1, static_cast<std::int64_t>((2 * x + 1) * w / (2 * w2)));
        dst[y * w2 + x] = src[sy * w + sx];
      }
    }
  }
  return out;
}

}  // namespace sflab::spectral
