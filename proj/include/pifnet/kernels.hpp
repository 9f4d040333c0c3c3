#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace pifnet::kernels {

/// Selects the loop distribution. Both produce bitwise-identical results:
/// every output element is reduced in the same order on either path.
enum class Exec { serial, parallel };

Exec default_exec() noexcept;
void set_default_exec(Exec exec) noexcept;

/// Convolution geometry normalised to three spatial axes (depth, height,
/// width). 2D convolutions use depth 1 with a depth-1 kernel.
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::array<std::size_t, 3> in{1, 1, 1};
  std::array<std::size_t, 3> kernel{1, 1, 1};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad_before{0, 0, 0};
  std::array<std::size_t, 3> out{1, 1, 1};

  std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
  std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
  std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
};

namespace serial {

void conv_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                  std::span<const double> bias, std::span<double> y);

/// dx, dw and db are overwritten.
void conv_backward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                   std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                   std::span<double> db);

}  // namespace serial

namespace omp {

void conv_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                  std::span<const double> bias, std::span<double> y);

void conv_backward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                   std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                   std::span<double> db);

}  // namespace omp

void conv_forward(Exec exec, const ConvGeometry& g, std::span<const double> x,
                  std::span<const double> w, std::span<const double> bias, std::span<double> y);

void conv_backward(Exec exec, const ConvGeometry& g, std::span<const double> x,
                   std::span<const double> w, std::span<const double> dy, std::span<double> dx,
                   std::span<double> dw, std::span<double> db);

}  // namespace pifnet::kernels
