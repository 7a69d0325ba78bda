#include "sflab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sflab {

namespace {

struct ConvGeometry {
  std::int64_t n, cin, h, w;
  std::int64_t cout, kh, kw;
  std::int64_t ho, wo;
  int stride, pad;

  std::int64_t rows() const { return n * ho * wo; }
  std::int64_t patch() const { return cin * kh * kw; }
};

ConvGeometry conv_geometry(const Shape& in, const Shape& k, int stride, int pad) {
  if (in.size() != 4 || k.size() != 4) {
    throw Error("conv2d expects 4-D input and kernels, got input " + to_string(in) +
                " and kernels " + to_string(k));
  }
  if (in[1] != k[1]) {
    throw Error("conv2d channel mismatch: input " + to_string(in) + " has " +
                std::to_string(in[1]) + " channels but kernels " + to_string(k) + " expect " +
                std::to_string(k[1]));
  }
  if (stride <= 0 || pad < 0) throw Error("conv2d requires stride > 0 and padding >= 0");
  if (in[2] + 2 * pad < k[2] || in[3] + 2 * pad < k[3]) {
    throw Error("conv2d kernel " + to_string(k) + " larger than padded input " + to_string(in));
  }
  ConvGeometry g{in[0], in[1], in[2], in[3], k[0], k[2], k[3], 0, 0, stride, pad};
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

// cols[row = (n, oh, ow)][col = (c, i, j)]
std::vector<float> im2col(const float* in, const ConvGeometry& g) {
  std::vector<float> cols(static_cast<std::size_t>(g.rows() * g.patch()), 0.0f);
  float* out = cols.data();
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t oh = 0; oh < g.ho; ++oh) {
      for (std::int64_t ow = 0; ow < g.wo; ++ow) {
        for (std::int64_t c = 0; c < g.cin; ++c) {
          const float* plane = in + (n * g.cin + c) * g.h * g.w;
          for (std::int64_t i = 0; i < g.kh; ++i) {
            const std::int64_t y = oh * g.stride - g.pad + i;
            if (y < 0 || y >= g.h) {
              out += g.kw;
              continue;
            }
            for (std::int64_t j = 0; j < g.kw; ++j) {
              const std::int64_t x = ow * g.stride - g.pad + j;
              *out++ = (x >= 0 && x < g.w) ? plane[y * g.w + x] : 0.0f;
            }
          }
        }
      }
    }
  }
  return cols;
}

void col2im_accumulate(const float* cols, float* in, const ConvGeometry& g) {
  const float* src = cols;
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t oh = 0; oh < g.ho; ++oh) {
      for (std::int64_t ow = 0; ow < g.wo; ++ow) {
        for (std::int64_t c = 0; c < g.cin; ++c) {
          float* plane = in + (n * g.cin + c) * g.h * g.w;
          for (std::int64_t i = 0; i < g.kh; ++i) {
            const std::int64_t y = oh * g.stride - g.pad + i;
            if (y < 0 || y >= g.h) {
              src += g.kw;
              continue;
            }
            for (std::int64_t j = 0; j < g.kw; ++j, ++src) {
              const std::int64_t x = ow * g.stride - g.pad + j;
              if (x >= 0 && x < g.w) plane[y * g.w + x] += *src;
            }
          }
        }
      }
    }
  }
}

// [rows = (n, pos), cout] <-> NCHW
void rows_to_nchw(const float* rows, float* out, const ConvGeometry& g) {
  const std::int64_t hw = g.ho * g.wo;
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t p = 0; p < hw; ++p) {
      const float* r = rows + (n * hw + p) * g.cout;
      for (std::int64_t o = 0; o < g.cout; ++o) out[(n * g.cout + o) * hw + p] = r[o];
    }
  }
}

std::vector<float> nchw_to_rows(const float* in, const ConvGeometry& g) {
  const std::int64_t hw = g.ho * g.wo;
  std::vector<float> rows(static_cast<std::size_t>(g.rows() * g.cout));
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t o = 0; o < g.cout; ++o) {
      const float* plane = in + (n * g.cout + o) * hw;
      for (std::int64_t p = 0; p < hw; ++p) rows[static_cast<std::size_t>((n * hw + p) * g.cout + o)] = plane[p];
    }
  }
  return rows;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw Error(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                to_string(b.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding) {
  const auto g = conv_geometry(input.shape(), kernels.shape(), stride, padding);
  const auto cols = im2col(input.raw(), g);
  std::vector<float> rows(static_cast<std::size_t>(g.rows() * g.cout));
  gemm_abt(cols.data(), kernels.raw(), rows.data(), g.rows(), g.cout, g.patch(), false);
  Tensor out(Shape{g.n, g.cout, g.ho, g.wo});
  rows_to_nchw(rows.data(), out.raw(), g);
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw Error("argmax_rows expects [N,K], got " + to_string(logits.shape()));
  const auto n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const float* r = logits.raw() + i * k;
    int best = 0;
    for (std::int64_t j = 1; j < k; ++j) {
      if (r[j] > r[best]) best = static_cast<int>(j);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw Error("softmax expects [N,K], got " + to_string(logits.shape()));
  Tensor p(logits.shape());
  const auto n = logits.dim(0), k = logits.dim(1);
  for (std::int64_t i = 0; i < n; ++i) {
    const float* r = logits.raw() + i * k;
    float* o = p.raw() + i * k;
    const float m = *std::max_element(r, r + k);
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(r[j] - m));
    for (std::int64_t j = 0; j < k; ++j) {
      o[j] = static_cast<float>(std::exp(static_cast<double>(r[j] - m)) / z);
    }
  }
  return p;
}

namespace ops {

Var conv2d(const Var& input, const Var& kernels, int stride, int padding) {
  Tape* tape = input.tape();
  const auto g = conv_geometry(input.shape(), kernels.shape(), stride, padding);
  Tensor out = sflab::conv2d(input.value(), kernels.value(), stride, padding);
  return tape->record(
      std::move(out), {input, kernels},
      [input, kernels, g](const Tape&, const Tensor& gout, std::span<Tensor* const> grads) {
        const auto drows = nchw_to_rows(gout.raw(), g);
        if (grads[1]) {
          const auto cols = im2col(input.value().raw(), g);
          gemm_atb(drows.data(), cols.data(), grads[1]->raw(), g.cout, g.patch(), g.rows(), true);
        }
        if (grads[0]) {
          std::vector<float> dcols(static_cast<std::size_t>(g.rows() * g.patch()));
          gemm_ab(drows.data(), kernels.value().raw(), dcols.data(), g.rows(), g.patch(), g.cout,
                  false);
          col2im_accumulate(dcols.data(), grads[0]->raw(), g);
        }
      });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return a.tape()->record(
      std::move(out), {a, b}, [](const Tape&, const Tensor& gout, std::span<Tensor* const> grads) {
        if (grads[0]) *grads[0] += gout;
        if (grads[1]) *grads[1] += gout;
      });
}

Var add_scalar(const Var& x, float s) {
  Tensor out = x.value();
  for (auto& v : out.data()) v += s;
  return x.tape()->record(
      std::move(out), {x}, [](const Tape&, const Tensor& gout, std::span<Tensor* const> grads) {
        *grads[0] += gout;
      });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return x.tape()->record(
      std::move(out), {x}, [x](const Tape&, const Tensor& gout, std::span<Tensor* const> grads) {
        const auto& in = x.value();
        for (std::int64_t i = 0; i < in.numel(); ++i) {
          if (in[i] > 0.0f) (*grads[0])[i] += gout[i];
        }
      });
}

Var max_pool(const Var& x, int window, int stride) {
  const auto& in = x.value();
  if (in.rank() != 4) throw Error("max_pool expects 4-D input, got " + to_string(in.shape()));
  if (window <= 0 || stride <= 0) throw Error("max_pool requires positive window and stride");
  const auto n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  if (h < window || w < window) throw Error("max_pool window larger than input " + to_string(in.shape()));
  const auto ho = (h - window) / stride + 1, wo = (w - window) / stride + 1;
  Tensor out(Shape{n, c, ho, wo});
  std::vector<std::int64_t> arg(static_cast<std::size_t>(out.numel()));
  std::int64_t o = 0;
  for (std::int64_t p = 0; p < n * c; ++p) {
    const float* plane = in.raw() + p * h * w;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox, ++o) {
        std::int64_t best = (oy * stride) * w + ox * stride;
        for (int i = 0; i < window; ++i) {
          for (int j = 0; j < window; ++j) {
            const std::int64_t idx = (oy * stride + i) * w + ox * stride + j;
            if (plane[idx] > plane[best]) best = idx;
          }
        }
        out[o] = plane[best];
        arg[static_cast<std::size_t>(o)] = p * h * w + best;
      }
    }
  }
  return x.tape()->record(
      std::move(out), {x},
      [arg = std::move(arg)](const Tape&, const Tensor& gout, std::span<Tensor* const> grads) {
        for (std::size_t i = 0; i < arg.size(); ++i) (*grads[0])[arg[i]] += gout[static_cast<std::int64_t>(i)];
      });
}

Var global_avg_pool(const Var& x) {
  const auto& in = x.value();
  if (in.rank() != 4) throw Error("global_avg_pool expects 4-D input, got " + to_string(in.shape()));
  const auto n = in.dim(0), c = in.dim(1), hw = in.dim(2) * in.dim(3);
  Tensor out(Shape{n, c});
  for (std::int64_t p = 0; p < n * c; ++p) {
    double s = 0.0;
    for (std::int64_t i = 0; i < hw; ++i) s += in[p * hw + i];
    out[p] = static_cast<float>(s / static_cast<double>(hw));
  }
  return x.tape()->record(
      std::move(out), {x}, [hw](const Tape&, const Tensor& gout, std::span<Tensor* const> grads) {
        const float inv = 1.0f / static_cast<float>(hw);
        for (std::int64_t p = 0; p < gout.numel(); ++p) {
          const float g = gout[p] * inv;
          for (std::int64_t i = 0; i < hw; ++i) (*grads[0])[p * hw + i] += g;
        }
      });
}

Var batch_norm(const Var& x, const Var& scale, const Var& shift, BatchNormState& state,
               bool training) {
  const auto& in = x.value();
  if (in.rank() != 4) throw Error("batch_norm expects 4-D input, got " + to_string(in.shape()));
  const auto n = in.dim(0), c = in.dim(1), hw = in.dim(2) * in.dim(3);
  require_shape(scale.value(), Shape{c}, "batch_norm scale");
  require_shape(shift.value(), Shape{c}, "batch_norm shift");
  require_shape(state.running_mean, Shape{c}, "batch_norm running mean");
  const std::int64_t count = n * hw;

  std::vector<float> mean(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));
  if (training) {
    if (count < 2) throw Error("batch_norm training needs more than one value per channel");
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0, s2 = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const float* p = in.raw() + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      for (std::int64_t b = 0; b < n; ++b) {
        const float* p = in.raw() + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) s2 += (p[i] - m) * (p[i] - m);
      }
      const double var = s2 / static_cast<double>(count);
      mean[static_cast<std::size_t>(ch)] = static_cast<float>(m);
      inv_std[static_cast<std::size_t>(ch)] = static_cast<float>(1.0 / std::sqrt(var + state.eps));
      const double unbiased = s2 / static_cast<double>(count - 1);
      state.running_mean[ch] =
          (1.0f - state.momentum) * state.running_mean[ch] + state.momentum * static_cast<float>(m);
      state.running_var[ch] = (1.0f - state.momentum) * state.running_var[ch] +
                              state.momentum * static_cast<float>(unbiased);
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mean[static_cast<std::size_t>(ch)] = state.running_mean[ch];
      inv_std[static_cast<std::size_t>(ch)] = 1.0f / std::sqrt(state.running_var[ch] + state.eps);
    }
  }

  Tensor out(in.shape());
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const float m = mean[static_cast<std::size_t>(ch)], is = inv_std[static_cast<std::size_t>(ch)];
      const float gm = scale.value()[ch], bt = shift.value()[ch];
      const float* p = in.raw() + (b * c + ch) * hw;
      float* o = out.raw() + (b * c + ch) * hw;
      for (std::int64_t i = 0; i < hw; ++i) o[i] = gm * (p[i] - m) * is + bt;
    }
  }

  return x.tape()->record(
      std::move(out), {x, scale, shift},
      [x, scale, mean = std::move(mean), inv_std = std::move(inv_std), training, n, c, hw, count](
          const Tape&, const Tensor& gout, std::span<Tensor* const> grads) {
        const auto& in = x.value();
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const float m = mean[static_cast<std::size_t>(ch)], is = inv_std[static_cast<std::size_t>(ch)];
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::int64_t b = 0; b < n; ++b) {
            const float* p = in.raw() + (b * c + ch) * hw;
            const float* g = gout.raw() + (b * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
              sum_dy += g[i];
              sum_dy_xhat += static_cast<double>(g[i]) * (p[i] - m) * is;
            }
          }
          if (grads[1]) (*grads[1])[ch] += static_cast<float>(sum_dy_xhat);
          if (grads[2]) (*grads[2])[ch] += static_cast<float>(sum_dy);
          if (!grads[0]) continue;
          const float gm = scale.value()[ch];
          const float mean_dy = static_cast<float>(sum_dy / static_cast<double>(count));
          const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / static_cast<double>(count));
          for (std::int64_t b = 0; b < n; ++b) {
            const float* p = in.raw() + (b * c + ch) * hw;
            const float* g = gout.raw() + (b * c + ch) * hw;
            float* dx = grads[0]->raw() + (b * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
              if (training) {
                const float xhat = (p[i] - m) * is;
                dx[i] += gm * is * (g[i] - mean_dy - xhat * mean_dy_xhat);
              } else {
                dx[i] += gm * is * g[i];
              }
            }
          }
        }
      });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const auto& in = x.value();
  const auto& w = weight.value();
  if (in.rank() != 2 || w.rank() != 2 || in.dim(1) != w.dim(1)) {
    throw Error("linear shape mismatch: input " + to_string(in.shape()) + ", weight " +
                to_string(w.shape()));
  }
  const auto n = in.dim(0), f = in.dim(1), k = w.dim(0);
  require_shape(bias.value(), Shape{k}, "linear bias");
  Tensor out(Shape{n, k});
  gemm_abt(in.raw(), w.raw(), out.raw(), n, k, f, false);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < k; ++j) out[i * k + j] += bias.value()[j];
  }
  return x.tape()->record(
      std::move(out), {x, weight, bias},
      [x, weight, n, f, k](const Tape&, const Tensor& gout, std::span<Tensor* const> grads) {
        if (grads[0]) gemm_ab(gout.raw(), weight.value().raw(), grads[0]->raw(), n, f, k, true);
        if (grads[1]) gemm_atb(gout.raw(), x.value().raw(), grads[1]->raw(), k, f, n, true);
        if (grads[2]) {
          for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < k; ++j) (*grads[2])[j] += gout[i * k + j];
          }
        }
      });
}

Var softmax_xent(const Var& logits, std::span<const int> labels) {
  const auto& z = logits.value();
  if (z.rank() != 2) throw Error("softmax_xent expects [N,K] logits, got " + to_string(z.shape()));
  const auto n = z.dim(0), k = z.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw Error("softmax_xent: " + std::to_string(labels.size()) + " labels for " +
                std::to_string(n) + " rows");
  }
  std::vector<int> y(labels.begin(), labels.end());
  for (int label : y) {
    if (label < 0 || label >= k) throw Error("softmax_xent: label " + std::to_string(label) + " out of range");
  }
  Tensor prob = softmax(z);
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const float* r = z.raw() + i * k;
    const float m = *std::max_element(r, r + k);
    double s = 0.0;
    for (std::int64_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(r[j] - m));
    loss += std::log(s) + m - r[y[static_cast<std::size_t>(i)]];
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericalError("non-finite cross-entropy loss");
  return logits.tape()->record(
      Tensor::scalar(static_cast<float>(loss)), {logits},
      [prob = std::move(prob), y = std::move(y), n, k](const Tape&, const Tensor& gout,
                                                       std::span<Tensor* const> grads) {
        const float s = gout[0] / static_cast<float>(n);
        for (std::int64_t i = 0; i < n; ++i) {
          for (std::int64_t j = 0; j < k; ++j) {
            float g = prob[i * k + j];
            if (j == y[static_cast<std::size_t>(i)]) g -= 1.0f;
            (*grads[0])[i * k + j] += s * g;
          }
        }
      });
}

Var sum(const Var& x) {
  const float total = static_cast<float>(sflab::sum(x.value()));
  return x.tape()->record(
      Tensor::scalar(total), {x}, [](const Tape&, const Tensor& gout, std::span<Tensor* const> grads) {
        for (auto& v : grads[0]->data()) v += gout[0];
      });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape()->record(
      std::move(out), {x}, [](const Tape&, const Tensor& gout, std::span<Tensor* const> grads) {
        auto& g = *grads[0];
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += gout[i];
      });
}

}  // namespace ops
}  // namespace sflab
