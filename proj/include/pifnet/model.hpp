#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pifnet/layers.hpp"
#include "pifnet/pif.hpp"
#include "pifnet/rng.hpp"
#include "pifnet/tensor.hpp"

namespace pifnet {

enum class ModelKind { baseline, pif };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

/// Declarative architecture description.
///
/// Baseline: filters_per_block.size() == 5 Conv-BN-ReLU blocks. PIF model:
/// 4 Conv-BN-ReLU blocks followed by the PIF layer described by `pif`, whose
/// input_size and in_channels are filled in by the builder. Both end with
/// global average pooling and a linear classifier.
struct ModelSpec {
  std::size_t dims = 2;
  Shape input_shape{1, 32, 32};  // [C, spatial...]
  std::size_t num_classes = 2;
  std::vector<std::size_t> filters_per_block{8, 8, 16, 16, 16};
  /// One stride per conv block; empty means {1, 2, 2, 1, 1} truncated.
  std::vector<std::size_t> strides;
  std::size_t kernel_size = 3;
  std::optional<PifConfig> pif;
};

/// Non-owning handle to a learnable tensor and its gradient.
struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

/// Non-owning handle to a non-learnable state tensor (BN running stats).
struct BufferRef {
  std::string name;
  Tensor* value;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string name() const = 0;
  /// Per-sample shapes [C, spatial...]; throws ArchitectureError when the
  /// input does not fit.
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  /// Stores parameter gradients and returns dL/dx.
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect_params(std::vector<ParamRef>& out) = 0;
  virtual void collect_buffers(std::vector<BufferRef>& out) { (void)out; }
  /// Learnable scalar count.
  virtual std::size_t param_count() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;
};

/// Conv -> BatchNorm -> ReLU with "same"-style padding and a configurable stride.
class ConvBlock final : public Layer {
 public:
  ConvBlock(std::string name, ConvParams conv, BatchNormParams bn);

  std::string name() const override { return name_; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<ParamRef>& out) override;
  void collect_buffers(std::vector<BufferRef>& out) override;
  std::size_t param_count() const override { return conv_.param_count() + bn_.param_count(); }
  std::unique_ptr<Layer> clone() const override;

  const ConvParams& conv() const { return conv_; }
  const BatchNormParams& bn() const { return bn_; }

 private:
  std::string name_;
  ConvParams conv_;
  BatchNormParams bn_;
  ConvGrads conv_grads_;
  BatchNormGrads bn_grads_;
  ConvCache conv_cache_;
  BatchNormCache bn_cache_;
  Tensor pre_relu_;
};

class PifLayer final : public Layer {
 public:
  PifLayer(PifConfig cfg, PifParams params);

  std::string name() const override { return "pif"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<ParamRef>& out) override;
  void collect_buffers(std::vector<BufferRef>& out) override;
  std::size_t param_count() const override;
  std::unique_ptr<Layer> clone() const override;

  const PifConfig& config() const { return cfg_; }
  const PifParams& params() const { return params_; }
  PifParams& mutable_params() { return params_; }

 private:
  std::string prefix(std::size_t patch, std::size_t block) const;

  PifConfig cfg_;
  PifParams params_;
  std::vector<std::vector<PatchBlockGrads>> grads_;
  PifCache cache_;
};

class GlobalAvgPool final : public Layer {
 public:
  std::string name() const override { return "gap"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<ParamRef>&) override {}
  std::size_t param_count() const override { return 0; }
  std::unique_ptr<Layer> clone() const override;

 private:
  Shape x_shape_;
};

class Linear final : public Layer {
 public:
  explicit Linear(LinearParams p);

  std::string name() const override { return "head"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<ParamRef>& out) override;
  std::size_t param_count() const override { return p_.param_count(); }
  std::unique_ptr<Layer> clone() const override;

  const LinearParams& params() const { return p_; }

 private:
  LinearParams p_;
  LinearGrads grads_;
  Tensor x_;
};

/// Ordered layer stack. Copying deep-copies every layer.
class Model {
 public:
  Model(ModelKind kind, ModelSpec spec, std::vector<std::unique_ptr<Layer>> layers);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  ModelKind kind() const { return kind_; }
  const ModelSpec& spec() const { return spec_; }
  std::size_t layer_count() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }

  /// x is [N, C, spatial...] matching spec().input_shape; returns [N, classes].
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dlogits);

  std::vector<ParamRef> parameters();
  std::vector<BufferRef> buffers();
  std::size_t param_count() const;

  /// Parameters followed by buffers, in collection order.
  std::vector<Tensor> state() const;
  void load_state(const std::vector<Tensor>& state);

 private:
  ModelKind kind_;
  ModelSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

Model build_baseline(const ModelSpec& spec, Rng& rng);
Model build_pif_model(const ModelSpec& spec, Rng& rng);
Model build_model(ModelKind kind, const ModelSpec& spec, Rng& rng);

/// Learnable scalars (weights, biases, gamma, beta).
std::size_t model_param_count(const Model& m);

std::vector<std::size_t> default_strides(std::size_t blocks);

}  // namespace pifnet
