#include "sflab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace sflab {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw Error("negative extent in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

namespace {

void check_rank(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw Error("tensor rank must be 1..4, got shape " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_rank(shape_);
  data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_rank(shape_);
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw Error("tensor data length " + std::to_string(data_.size()) +
                " does not match shape " + to_string(shape_));
  }
}

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw Error("axis out of range for shape " + to_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

float& Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
  return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

float Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
  return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw Error("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice0(std::int64_t begin, std::int64_t end) const {
  if (begin < 0 || end > dim(0) || begin > end) {
    throw Error("slice0 [" + std::to_string(begin) + "," + std::to_string(end) +
                ") out of range for " + to_string(shape_));
  }
  const std::int64_t stride = numel() / dim(0);
  Shape s = shape_;
  s[0] = end - begin;
  std::vector<float> d(data_.begin() + begin * stride, data_.begin() + end * stride);
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::gather0(std::span<const std::int64_t> indices) const {
  const std::int64_t stride = numel() / dim(0);
  Shape s = shape_;
  s[0] = static_cast<std::int64_t>(indices.size());
  std::vector<float> d(static_cast<std::size_t>(s[0] * stride));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = indices[i];
    if (src < 0 || src >= dim(0)) throw Error("gather0 index out of range");
    std::memcpy(d.data() + i * stride, data_.data() + src * stride,
                static_cast<std::size_t>(stride) * sizeof(float));
  }
  return Tensor(std::move(s), std::move(d));
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool Tensor::same_values(const Tensor& other) const noexcept {
  return shape_ == other.shape_ &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw Error("shape mismatch in += : " + to_string(shape_) + " vs " + to_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(float s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Tensor concat0(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error("concat0 of zero tensors");
  Shape s = parts[0].shape();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = s;
    a[0] = b[0] = 0;
    if (a != b) throw Error("concat0 trailing-shape mismatch");
    total += p.dim(0);
  }
  s[0] = total;
  std::vector<float> d;
  d.reserve(static_cast<std::size_t>(shape_numel(s)));
  for (const auto& p : parts) d.insert(d.end(), p.data().begin(), p.data().end());
  return Tensor(std::move(s), std::move(d));
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error("max_abs_diff shape mismatch: " + to_string(a.shape()) + " vs " +
                to_string(b.shape()));
  }
  float m = 0.0f;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

float max_abs(const Tensor& a) {
  float m = 0.0f;
  for (float v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (float v : a.data()) s += v;
  return s;
}

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw Error(std::string(what) + ": expected shape " + to_string(expected) + ", got " +
                to_string(t.shape()));
  }
}

}  // namespace sflab
