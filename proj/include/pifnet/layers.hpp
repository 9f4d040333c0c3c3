#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pifnet/kernels.hpp"
#include "pifnet/rng.hpp"
#include "pifnet/tensor.hpp"

namespace pifnet {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Shared-weight convolution (2D or 3D)
// ---------------------------------------------------------------------------

/// weights [C_out, C_in, k...], bias [C_out]; stride and pads are per spatial axis.
struct ConvParams {
  Tensor weights;
  Tensor bias;
  std::vector<std::size_t> stride;
  std::vector<std::size_t> pad_before;
  std::vector<std::size_t> pad_after;

  std::size_t spatial_rank() const { return weights.rank() - 2; }
  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t param_count() const { return weights.size() + bias.size(); }
};

/// Zero-initialised params with stride 1 and symmetric padding `pad` per side.
ConvParams make_conv_params(std::size_t in_channels, std::size_t out_channels,
                            std::vector<std::size_t> kernel, std::vector<std::size_t> stride,
                            std::vector<std::size_t> pad_before, std::vector<std::size_t> pad_after);

/// Output spatial extents for an input of spatial extents `in`; throws
/// ShapeError if any would be < 1.
std::vector<std::size_t> conv_output_size(const ConvParams& p, std::span<const std::size_t> in);

struct ConvCache {
  Tensor x;
  Tensor weights;
  kernels::ConvGeometry geometry;
  Shape y_shape;
};

struct ConvResult {
  Tensor y;
  ConvCache cache;
};

struct ConvGrads {
  Tensor dx;
  Tensor dw;
  Tensor db;
};

ConvResult conv_forward(const Tensor& x, const ConvParams& p,
                        kernels::Exec exec = kernels::default_exec());
ConvGrads conv_backward(const Tensor& dy, const ConvCache& cache,
                        kernels::Exec exec = kernels::default_exec());

// ---------------------------------------------------------------------------
// Batch normalisation
// ---------------------------------------------------------------------------

struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  std::size_t param_count() const { return gamma.size() + beta.size(); }
};

/// gamma 1, beta 0, running mean 0, running var 1.
BatchNormParams make_batchnorm_params(std::size_t channels, double eps = 1e-5, double momentum = 0.1);

struct BatchNormCache {
  Mode mode = Mode::train;
  Tensor xhat;
  std::vector<double> inv_std;
  Tensor gamma;
};

/// Running statistics are returned, never written back into the params.
/// In eval mode they are copies of the inputs.
struct BatchNormResult {
  Tensor y;
  BatchNormCache cache;
  Tensor running_mean;
  Tensor running_var;
};

struct BatchNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};

/// Train mode normalises with biased batch statistics over batch and spatial
/// axes and updates running = (1 - momentum) * running + momentum * batch.
BatchNormResult batchnorm_forward(const Tensor& x, const BatchNormParams& p, Mode mode);
BatchNormGrads batchnorm_backward(const Tensor& dy, const BatchNormCache& cache);

// ---------------------------------------------------------------------------
// Element-wise, pooling, dense and loss
// ---------------------------------------------------------------------------

struct ReluResult {
  Tensor y;
  Tensor x;  // cache
};

ReluResult relu_forward(const Tensor& x);
/// Gradient passes where x > 0; the subgradient at exactly 0 is 0.
Tensor relu_backward(const Tensor& dy, const Tensor& x);

/// [N, C, spatial...] -> [N, C] spatial mean.
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& dy, const Shape& x_shape);

struct LinearParams {
  Tensor weights;  // [F, K]
  Tensor bias;     // [K]

  std::size_t param_count() const { return weights.size() + bias.size(); }
};

struct LinearGrads {
  Tensor dx;
  Tensor dw;
  Tensor db;
};

Tensor linear_forward(const Tensor& x, const LinearParams& p);
LinearGrads linear_backward(const Tensor& dy, const Tensor& x, const LinearParams& p);

struct LossResult {
  double loss = 0.0;
  Tensor dlogits;
};

/// Mean negative log-likelihood of `labels` under softmax(logits), with
/// max-subtraction for stability. dlogits = (softmax - onehot) / N.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Uniform in [-b, b] with b = sqrt(6 / fan_in). For conv weights
/// [C_out, C_in, k...] fan_in = C_in * prod(k); for rank-2 linear weights
/// [F, K] fan_in = F.
Tensor he_init(Rng& rng, const Shape& shape);
double he_bound(const Shape& shape);

}  // namespace pifnet
