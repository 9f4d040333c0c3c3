#include "pifnet/layers.hpp"

#include <algorithm>
#include <cmath>

#include "pifnet/errors.hpp"

namespace pifnet {

namespace {

std::size_t spatial_volume(const Shape& shape) {
  std::size_t v = 1;
  for (std::size_t a = 2; a < shape.size(); ++a) v *= shape[a];
  return v;
}

void require_same_shape(const Tensor& a, const Shape& expected, const char* what) {
  if (a.shape() != expected) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_to_string(expected) + ", got " +
                     shape_to_string(a.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

ConvParams make_conv_params(std::size_t in_channels, std::size_t out_channels,
                            std::vector<std::size_t> kernel, std::vector<std::size_t> stride,
                            std::vector<std::size_t> pad_before, std::vector<std::size_t> pad_after) {
  const std::size_t d = kernel.size();
  if (d != 2 && d != 3) {
    throw InvalidArgumentError("convolution must have 2 or 3 spatial axes");
  }
  if (stride.size() != d || pad_before.size() != d || pad_after.size() != d) {
    throw InvalidArgumentError("stride and padding must have one entry per spatial axis");
  }
  Shape wshape{out_channels, in_channels};
  wshape.insert(wshape.end(), kernel.begin(), kernel.end());
  ConvParams p;
  p.weights = Tensor::create(wshape, 0.0);
  p.bias = Tensor::create({out_channels}, 0.0);
  p.stride = std::move(stride);
  p.pad_before = std::move(pad_before);
  p.pad_after = std::move(pad_after);
  return p;
}

std::vector<std::size_t> conv_output_size(const ConvParams& p, std::span<const std::size_t> in) {
  const std::size_t d = p.spatial_rank();
  if (in.size() != d) {
    throw ShapeError("convolution expects " + std::to_string(d) + " spatial axes, got " +
                     std::to_string(in.size()));
  }
  std::vector<std::size_t> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t k = p.weights.dim(i + 2);
    const std::size_t padded = in[i] + p.pad_before[i] + p.pad_after[i];
    if (p.stride[i] == 0) throw InvalidArgumentError("convolution stride must be positive");
    if (padded < k) {
      throw ShapeError("convolution output would be empty on spatial axis " + std::to_string(i) +
                       " (input " + std::to_string(in[i]) + ", kernel " + std::to_string(k) + ")");
    }
    out[i] = (padded - k) / p.stride[i] + 1;
  }
  return out;
}

ConvResult conv_forward(const Tensor& x, const ConvParams& p, kernels::Exec exec) {
  const std::size_t d = p.spatial_rank();
  if (d != 2 && d != 3) {
    throw ShapeError("convolution weights must be [C_out, C_in, k...] with 2 or 3 spatial axes");
  }
  if (x.rank() != d + 2) {
    throw ShapeError("convolution input rank " + std::to_string(x.rank()) + " does not match " +
                     std::to_string(d) + " spatial axes");
  }
  if (x.dim(1) != p.in_channels()) {
    throw ShapeError("convolution expects " + std::to_string(p.in_channels()) +
                     " input channels, got " + std::to_string(x.dim(1)));
  }
  if (p.bias.shape() != Shape{p.out_channels()}) {
    throw ShapeError("convolution bias must have shape [C_out]");
  }
  std::vector<std::size_t> in(x.shape().begin() + 2, x.shape().end());
  const auto out = conv_output_size(p, in);

  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = p.in_channels();
  g.out_channels = p.out_channels();
  const std::size_t lead = 3 - d;  // 2D maps onto (1, H, W)
  for (std::size_t i = 0; i < d; ++i) {
    g.in[lead + i] = in[i];
    g.kernel[lead + i] = p.weights.dim(i + 2);
    g.stride[lead + i] = p.stride[i];
    g.pad_before[lead + i] = p.pad_before[i];
    g.out[lead + i] = out[i];
  }

  Shape yshape{g.batch, g.out_channels};
  yshape.insert(yshape.end(), out.begin(), out.end());
  Tensor y = Tensor::create(yshape);
  kernels::conv_forward(exec, g, x.data(), p.weights.data(), p.bias.data(), y.data());
  return {std::move(y), ConvCache{x, p.weights, g, std::move(yshape)}};
}

ConvGrads conv_backward(const Tensor& dy, const ConvCache& cache, kernels::Exec exec) {
  require_same_shape(dy, cache.y_shape, "conv_backward");
  ConvGrads grads{Tensor::zeros_like(cache.x), Tensor::zeros_like(cache.weights),
                  Tensor::create({cache.geometry.out_channels}, 0.0)};
  kernels::conv_backward(exec, cache.geometry, cache.x.data(), cache.weights.data(), dy.data(),
                         grads.dx.data(), grads.dw.data(), grads.db.data());
  return grads;
}

// ---------------------------------------------------------------------------
// Batch normalisation
// ---------------------------------------------------------------------------

BatchNormParams make_batchnorm_params(std::size_t channels, double eps, double momentum) {
  if (!(eps > 0.0)) throw InvalidArgumentError("batchnorm eps must be positive");
  if (!(momentum > 0.0 && momentum <= 1.0)) {
    throw InvalidArgumentError("batchnorm momentum must lie in (0, 1]");
  }
  return BatchNormParams{Tensor::create({channels}, 1.0), Tensor::create({channels}, 0.0),
                         Tensor::create({channels}, 0.0), Tensor::create({channels}, 1.0), eps,
                         momentum};
}

BatchNormResult batchnorm_forward(const Tensor& x, const BatchNormParams& p, Mode mode) {
  if (x.rank() < 2) throw ShapeError("batchnorm input must be [N, C, ...]");
  const std::size_t N = x.dim(0);
  const std::size_t C = x.dim(1);
  if (p.gamma.shape() != Shape{C}) {
    throw ShapeError("batchnorm expects " + std::to_string(p.gamma.size()) + " channels, got " +
                     std::to_string(C));
  }
  const std::size_t S = spatial_volume(x.shape());
  const double count = static_cast<double>(N * S);

  BatchNormResult r;
  r.running_mean = p.running_mean;
  r.running_var = p.running_var;
  std::vector<double> mean(C), var(C);
  if (mode == Mode::train) {
    if (N < 2) {
      throw DegenerateBatchError("batchnorm in train mode needs a batch of at least 2, got " +
                                 std::to_string(N));
    }
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* xc = x.data().data() + (n * C + c) * S;
        for (std::size_t i = 0; i < S; ++i) s += xc[i];
      }
      mean[c] = s / count;
      double q = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* xc = x.data().data() + (n * C + c) * S;
        for (std::size_t i = 0; i < S; ++i) {
          const double dlt = xc[i] - mean[c];
          q += dlt * dlt;
        }
      }
      var[c] = q / count;
      r.running_mean[c] = (1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean[c];
      r.running_var[c] = (1.0 - p.momentum) * p.running_var[c] + p.momentum * var[c];
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = p.running_mean[c];
      var[c] = p.running_var[c];
    }
  }

  r.cache.mode = mode;
  r.cache.gamma = p.gamma;
  r.cache.inv_std.resize(C);
  for (std::size_t c = 0; c < C; ++c) r.cache.inv_std[c] = 1.0 / std::sqrt(var[c] + p.eps);
  r.cache.xhat = Tensor::zeros_like(x);
  r.y = Tensor::zeros_like(x);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        const double xh = (x[base + i] - mean[c]) * r.cache.inv_std[c];
        r.cache.xhat[base + i] = xh;
        r.y[base + i] = p.gamma[c] * xh + p.beta[c];
      }
    }
  }
  return r;
}

BatchNormGrads batchnorm_backward(const Tensor& dy, const BatchNormCache& cache) {
  require_same_shape(dy, cache.xhat.shape(), "batchnorm_backward");
  const std::size_t N = dy.dim(0);
  const std::size_t C = dy.dim(1);
  const std::size_t S = spatial_volume(dy.shape());
  const double count = static_cast<double>(N * S);

  BatchNormGrads g{Tensor::zeros_like(dy), Tensor::create({C}, 0.0), Tensor::create({C}, 0.0)};
  for (std::size_t c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        sum_dy += dy[base + i];
        sum_dy_xhat += dy[base + i] * cache.xhat[base + i];
      }
    }
    g.dbeta[c] = sum_dy;
    g.dgamma[c] = sum_dy_xhat;
    const double scale = cache.gamma[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        if (cache.mode == Mode::train) {
          g.dx[base + i] = scale / count *
                           (count * dy[base + i] - sum_dy - cache.xhat[base + i] * sum_dy_xhat);
        } else {
          g.dx[base + i] = scale * dy[base + i];
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// ReLU, pooling, linear, loss
// ---------------------------------------------------------------------------

ReluResult relu_forward(const Tensor& x) {
  Tensor y = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return {std::move(y), x};
}

Tensor relu_backward(const Tensor& dy, const Tensor& x) {
  require_same_shape(dy, x.shape(), "relu_backward");
  Tensor dx = Tensor::zeros_like(dy);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() < 3) throw ShapeError("global_avg_pool input must have spatial axes");
  const std::size_t N = x.dim(0), C = x.dim(1), S = spatial_volume(x.shape());
  Tensor y = Tensor::create({N, C});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    double s = 0.0;
    for (std::size_t i = 0; i < S; ++i) s += x[nc * S + i];
    y[nc] = s / static_cast<double>(S);
  }
  return y;
}

Tensor global_avg_pool_backward(const Tensor& dy, const Shape& x_shape) {
  if (x_shape.size() < 3 || dy.shape() != Shape{x_shape[0], x_shape[1]}) {
    throw ShapeError("global_avg_pool_backward: gradient shape does not match [N, C]");
  }
  const std::size_t S = spatial_volume(x_shape);
  Tensor dx = Tensor::create(x_shape);
  for (std::size_t nc = 0; nc < dy.size(); ++nc) {
    const double v = dy[nc] / static_cast<double>(S);
    for (std::size_t i = 0; i < S; ++i) dx[nc * S + i] = v;
  }
  return dx;
}

Tensor linear_forward(const Tensor& x, const LinearParams& p) {
  if (x.rank() != 2 || p.weights.rank() != 2 || x.dim(1) != p.weights.dim(0)) {
    throw ShapeError("linear: input " + shape_to_string(x.shape()) + " incompatible with weights " +
                     shape_to_string(p.weights.shape()));
  }
  const std::size_t N = x.dim(0), F = x.dim(1), K = p.weights.dim(1);
  if (p.bias.shape() != Shape{K}) throw ShapeError("linear bias must have shape [K]");
  Tensor y = Tensor::create({N, K});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t k = 0; k < K; ++k) {
      double s = p.bias[k];
      for (std::size_t f = 0; f < F; ++f) s += x[n * F + f] * p.weights[f * K + k];
      y[n * K + k] = s;
    }
  }
  return y;
}

LinearGrads linear_backward(const Tensor& dy, const Tensor& x, const LinearParams& p) {
  const std::size_t N = x.dim(0), F = x.dim(1), K = p.weights.dim(1);
  require_same_shape(dy, Shape{N, K}, "linear_backward");
  LinearGrads g{Tensor::zeros_like(x), Tensor::zeros_like(p.weights), Tensor::create({K}, 0.0)};
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t f = 0; f < F; ++f) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += dy[n * K + k] * p.weights[f * K + k];
      g.dx[n * F + f] = s;
    }
  }
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n) s += x[n * F + f] * dy[n * K + k];
      g.dw[f * K + k] = s;
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    double s = 0.0;
    for (std::size_t n = 0; n < N; ++n) s += dy[n * K + k];
    g.db[k] = s;
  }
  return g;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy expects [N, K] logits");
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  if (labels.size() != N) {
    throw LabelError("expected " + std::to_string(N) + " labels, got " + std::to_string(labels.size()));
  }
  LossResult r{0.0, Tensor::zeros_like(logits)};
  for (std::size_t n = 0; n < N; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= K) {
      throw LabelError("label " + std::to_string(label) + " outside [0, " + std::to_string(K) + ")");
    }
    const double* row = logits.data().data() + n * K;
    const double mx = *std::max_element(row, row + K);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
    const double log_z = std::log(z);
    r.loss += -(row[label] - mx - log_z);
    for (std::size_t k = 0; k < K; ++k) {
      const double prob = std::exp(row[k] - mx - log_z);
      r.dlogits[n * K + k] = (prob - (static_cast<int>(k) == label ? 1.0 : 0.0)) / static_cast<double>(N);
    }
  }
  r.loss /= static_cast<double>(N);
  return r;
}

double he_bound(const Shape& shape) {
  if (shape.size() < 2) throw InvalidShapeError("he_init needs a weight shape of rank >= 2");
  std::size_t fan_in = 1;
  if (shape.size() == 2) {
    fan_in = shape[0];
  } else {
    for (std::size_t a = 1; a < shape.size(); ++a) fan_in *= shape[a];
  }
  return std::sqrt(6.0 / static_cast<double>(fan_in));
}

Tensor he_init(Rng& rng, const Shape& shape) {
  const double b = he_bound(shape);
  Tensor w = Tensor::create(shape);
  // [-b, b): the closed upper end has probability zero
  for (double& v : w.data()) v = rng.uniform(-b, b);
  return w;
}

}  // namespace pifnet
