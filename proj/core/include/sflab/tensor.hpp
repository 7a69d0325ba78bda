#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sflab {

/// Library-wide error type. Every precondition violation surfaces as one of
/// these (or a subclass) with a human-readable diagnostic.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::int64_t>;

std::string to_string(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

/// Dense row-major f32 array of rank <= 4. Four-dimensional tensors follow the
/// N, C, H, W convention.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0f); }
  static Tensor scalar(float v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const noexcept { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* raw() noexcept { return data_.data(); }
  const float* raw() const noexcept { return data_.data(); }

  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// 4-D element access (N, C, H, W).
  float& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w);
  float at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;

  Tensor reshaped(Shape shape) const;

  /// Copies items [begin, end) along axis 0.
  Tensor slice0(std::int64_t begin, std::int64_t end) const;
  /// Gathers the given indices along axis 0.
  Tensor gather0(std::span<const std::int64_t> indices) const;

  bool all_finite() const noexcept;
  bool same_values(const Tensor& other) const noexcept;  // bitwise

  void fill(float v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(float s);

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Concatenates tensors along axis 0. All trailing extents must agree.
Tensor concat0(std::span<const Tensor> parts);

float max_abs_diff(const Tensor& a, const Tensor& b);
float max_abs(const Tensor& a);
double sum(const Tensor& a);

void require_shape(const Tensor& t, const Shape& expected, const char* what);

}  // namespace sflab
