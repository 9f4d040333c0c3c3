#include "pifnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pifnet/errors.hpp"

namespace pifnet {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) {
    throw InvalidShapeError("tensor shape must have at least one axis");
  }
  for (auto d : shape) {
    if (d == 0) {
      throw InvalidShapeError("tensor shape " + shape_to_string(shape) + " has a zero extent");
    }
  }
}

void check_region(const Shape& shape, std::span<const std::size_t> offsets,
                  std::span<const std::size_t> sizes, const char* op) {
  if (offsets.size() != shape.size() || sizes.size() != shape.size()) {
    throw RegionBoundsError(std::string(op) + ": region rank does not match tensor rank " +
                            std::to_string(shape.size()));
  }
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (sizes[i] == 0 || offsets[i] + sizes[i] > shape[i]) {
      throw RegionBoundsError(std::string(op) + ": axis " + std::to_string(i) + " region [" +
                              std::to_string(offsets[i]) + ", " +
                              std::to_string(offsets[i] + sizes[i]) + ") exceeds extent " +
                              std::to_string(shape[i]));
    }
  }
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

// Visits each contiguous last-axis run of a region, passing the flat offset of
// the run start inside the source and inside the (dense) region.
template <typename F>
void for_each_run(const Shape& shape, std::span<const std::size_t> offsets,
                  std::span<const std::size_t> sizes, F&& f) {
  const std::size_t rank = shape.size();
  const auto strides = strides_of(shape);
  const std::size_t run = sizes[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t region_flat = 0;
  for (;;) {
    std::size_t src = 0;
    for (std::size_t a = 0; a < rank; ++a) src += (offsets[a] + idx[a]) * strides[a];
    f(src, region_flat, run);
    region_flat += run;
    // advance all but the last axis
    bool done = true;
    std::size_t a = rank - 1;
    while (a-- > 0) {
      if (++idx[a] < sizes[a]) {
        done = false;
        break;
      }
      idx[a] = 0;
    }
    if (done) return;
  }
}

}  // namespace

Tensor Tensor::create(Shape shape, double fill) {
  validate_shape(shape);
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, fill));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  validate_shape(shape);
  if (data.size() != shape_size(shape)) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_to_string(shape));
  }
  return Tensor(std::move(shape), std::move(data));
}

std::size_t Tensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index rank mismatch");
  }
  std::size_t flat = 0;
  for (std::size_t a = 0; a < shape_.size(); ++a) {
    if (index[a] >= shape_[a]) {
      throw RegionBoundsError("index out of range on axis " + std::to_string(a));
    }
    flat = flat * shape_[a] + index[a];
  }
  return flat;
}

Tensor Tensor::reshape(Shape shape) const {
  validate_shape(shape);
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor slice_region(const Tensor& x, std::span<const std::size_t> offsets,
                    std::span<const std::size_t> sizes) {
  check_region(x.shape(), offsets, sizes, "slice_region");
  Tensor out = Tensor::create(Shape(sizes.begin(), sizes.end()));
  auto src = x.data();
  auto dst = out.data();
  for_each_run(x.shape(), offsets, sizes, [&](std::size_t s, std::size_t d, std::size_t n) {
    std::copy_n(src.begin() + s, n, dst.begin() + d);
  });
  return out;
}

void write_region_into(Tensor& x, std::span<const std::size_t> offsets, const Tensor& patch) {
  check_region(x.shape(), offsets, patch.shape(), "write_region");
  auto src = patch.data();
  auto dst = x.data();
  for_each_run(x.shape(), offsets, patch.shape(), [&](std::size_t s, std::size_t d, std::size_t n) {
    std::copy_n(src.begin() + d, n, dst.begin() + s);
  });
}

Tensor write_region(Tensor x, std::span<const std::size_t> offsets, const Tensor& patch) {
  write_region_into(x, offsets, patch);
  return x;
}

Tensor zero_pad(const Tensor& x, std::span<const std::size_t> pad_before,
                std::span<const std::size_t> pad_after) {
  if (x.rank() < 3) {
    throw ShapeError("zero_pad: tensor needs at least one spatial axis");
  }
  const std::size_t spatial = x.rank() - 2;
  if (pad_before.size() != spatial || pad_after.size() != spatial) {
    throw InvalidArgumentError("zero_pad: expected " + std::to_string(spatial) +
                               " pads per side (spatial axes only)");
  }
  Shape shape = x.shape();
  std::vector<std::size_t> offsets(x.rank(), 0);
  for (std::size_t i = 0; i < spatial; ++i) {
    shape[i + 2] += pad_before[i] + pad_after[i];
    offsets[i + 2] = pad_before[i];
  }
  Tensor out = Tensor::create(std::move(shape), 0.0);
  write_region_into(out, offsets, x);
  return out;
}

Tensor zero_pad(const Tensor& x, std::span<const long> pad_before, std::span<const long> pad_after) {
  std::vector<std::size_t> before, after;
  for (long p : pad_before) {
    if (p < 0) throw InvalidArgumentError("zero_pad: negative padding");
    before.push_back(static_cast<std::size_t>(p));
  }
  for (long p : pad_after) {
    if (p < 0) throw InvalidArgumentError("zero_pad: negative padding");
    after.push_back(static_cast<std::size_t>(p));
  }
  return zero_pad(x, std::span<const std::size_t>(before), std::span<const std::size_t>(after));
}

Tensor rng_uniform(Rng& rng, Shape shape, double lo, double hi) {
  if (!(lo < hi)) {
    throw InvalidArgumentError("rng_uniform: lo must be < hi");
  }
  Tensor out = Tensor::create(std::move(shape));
  for (double& v : out.data()) v = rng.uniform(lo, hi);
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace pifnet
