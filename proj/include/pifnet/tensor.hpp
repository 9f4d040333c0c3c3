#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "pifnet/rng.hpp"

namespace pifnet {

using Shape = std::vector<std::size_t>;
using Index = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles. Layout is [N, C, spatial...].
///
/// The shape is fixed at construction. A default-constructed tensor is an
/// empty placeholder with rank 0 and is only valid as a moved-into target.
class Tensor {
 public:
  Tensor() = default;

  /// Every element set to `fill`. Throws InvalidShapeError on an empty shape
  /// or a zero extent.
  static Tensor create(Shape shape, double fill = 0.0);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor zeros_like(const Tensor& other) { return create(other.shape(), 0.0); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::span<const std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
  double at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

  /// New tensor with the same data and a different shape of equal size.
  Tensor reshape(Shape shape) const;

  double sum() const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {}

  Shape shape_;
  std::vector<double> data_;
};

/// Copy of the hyper-rectangle [offsets, offsets + sizes) over every axis.
Tensor slice_region(const Tensor& x, std::span<const std::size_t> offsets,
                    std::span<const std::size_t> sizes);

/// Overwrites the region of `x` starting at `offsets` with `patch`.
void write_region_into(Tensor& x, std::span<const std::size_t> offsets, const Tensor& patch);

/// Value-returning form of write_region_into.
Tensor write_region(Tensor x, std::span<const std::size_t> offsets, const Tensor& patch);

/// Zero padding on the spatial axes (every axis after N and C).
Tensor zero_pad(const Tensor& x, std::span<const std::size_t> pad_before,
                std::span<const std::size_t> pad_after);

/// Same, with signed pads so that negative values are rejected explicitly.
Tensor zero_pad(const Tensor& x, std::span<const long> pad_before, std::span<const long> pad_after);

Tensor rng_uniform(Rng& rng, Shape shape, double lo, double hi);

/// Largest absolute element-wise difference. Shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace pifnet
