#include "pifnet/model.hpp"

#include <algorithm>

#include "pifnet/errors.hpp"

namespace pifnet {

std::string to_string(ModelKind kind) { return kind == ModelKind::baseline ? "baseline" : "pif"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "baseline") return ModelKind::baseline;
  if (s == "pif") return ModelKind::pif;
  throw ConfigError("unknown model '" + s + "' (expected baseline or pif)");
}

std::vector<std::size_t> default_strides(std::size_t blocks) {
  static const std::vector<std::size_t> pattern{1, 2, 2, 1, 1};
  std::vector<std::size_t> s;
  for (std::size_t i = 0; i < blocks; ++i) s.push_back(i < pattern.size() ? pattern[i] : 1);
  return s;
}

// ---------------------------------------------------------------------------
// ConvBlock
// ---------------------------------------------------------------------------

ConvBlock::ConvBlock(std::string name, ConvParams conv, BatchNormParams bn)
    : name_(std::move(name)), conv_(std::move(conv)), bn_(std::move(bn)) {
  conv_grads_ = {Tensor(), Tensor::zeros_like(conv_.weights), Tensor::zeros_like(conv_.bias)};
  bn_grads_ = {Tensor(), Tensor::zeros_like(bn_.gamma), Tensor::zeros_like(bn_.beta)};
}

Shape ConvBlock::output_shape(const Shape& input) const {
  if (input.size() != conv_.spatial_rank() + 1 || input[0] != conv_.in_channels()) {
    throw ArchitectureError(name_ + ": expected " + std::to_string(conv_.in_channels()) +
                            " input channels with " + std::to_string(conv_.spatial_rank()) +
                            " spatial axes, got " + shape_to_string(input));
  }
  std::vector<std::size_t> spatial(input.begin() + 1, input.end());
  for (std::size_t i = 0; i < spatial.size(); ++i) {
    if (spatial[i] < conv_.weights.dim(i + 2)) {
      throw ArchitectureError(name_ + ": spatial size " + std::to_string(spatial[i]) +
                              " is smaller than the kernel " +
                              std::to_string(conv_.weights.dim(i + 2)));
    }
  }
  Shape out{conv_.out_channels()};
  for (auto v : conv_output_size(conv_, spatial)) out.push_back(v);
  return out;
}

Tensor ConvBlock::forward(const Tensor& x, Mode mode) {
  ConvResult c = conv_forward(x, conv_);
  conv_cache_ = std::move(c.cache);
  BatchNormResult b = batchnorm_forward(c.y, bn_, mode);
  bn_cache_ = std::move(b.cache);
  bn_.running_mean = std::move(b.running_mean);
  bn_.running_var = std::move(b.running_var);
  ReluResult r = relu_forward(b.y);
  pre_relu_ = std::move(r.x);
  return std::move(r.y);
}

Tensor ConvBlock::backward(const Tensor& dy) {
  BatchNormGrads b = batchnorm_backward(relu_backward(dy, pre_relu_), bn_cache_);
  bn_grads_.dgamma = std::move(b.dgamma);
  bn_grads_.dbeta = std::move(b.dbeta);
  ConvGrads c = conv_backward(b.dx, conv_cache_);
  conv_grads_.dw = std::move(c.dw);
  conv_grads_.db = std::move(c.db);
  return std::move(c.dx);
}

void ConvBlock::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".conv.w", &conv_.weights, &conv_grads_.dw});
  out.push_back({name_ + ".conv.b", &conv_.bias, &conv_grads_.db});
  out.push_back({name_ + ".bn.gamma", &bn_.gamma, &bn_grads_.dgamma});
  out.push_back({name_ + ".bn.beta", &bn_.beta, &bn_grads_.dbeta});
}

void ConvBlock::collect_buffers(std::vector<BufferRef>& out) {
  out.push_back({name_ + ".bn.running_mean", &bn_.running_mean});
  out.push_back({name_ + ".bn.running_var", &bn_.running_var});
}

std::unique_ptr<Layer> ConvBlock::clone() const { return std::make_unique<ConvBlock>(*this); }

// ---------------------------------------------------------------------------
// PifLayer
// ---------------------------------------------------------------------------

PifLayer::PifLayer(PifConfig cfg, PifParams params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  validate(cfg_);
  grads_.resize(params_.per_patch.size());
  for (std::size_t p = 0; p < params_.per_patch.size(); ++p) {
    for (const auto& b : params_.per_patch[p]) {
      PatchBlockGrads g{Tensor::zeros_like(b.conv.weights), Tensor::zeros_like(b.conv.bias), Tensor(),
                        Tensor()};
      if (b.bn) {
        g.dgamma = Tensor::zeros_like(b.bn->gamma);
        g.dbeta = Tensor::zeros_like(b.bn->beta);
      }
      grads_[p].push_back(std::move(g));
    }
  }
}

Shape PifLayer::output_shape(const Shape& input) const {
  Shape expect{cfg_.in_channels};
  expect.insert(expect.end(), cfg_.input_size.begin(), cfg_.input_size.end());
  if (input != expect) {
    throw ArchitectureError("pif: expected per-sample input " + shape_to_string(expect) + ", got " +
                            shape_to_string(input));
  }
  Shape out{cfg_.out_channels};
  for (auto v : pif_output_size(cfg_)) out.push_back(v);
  return out;
}

Tensor PifLayer::forward(const Tensor& x, Mode mode) {
  PifResult r = pif_forward(x, cfg_, params_, mode);
  cache_ = std::move(r.cache);
  for (std::size_t p = 0; p < r.running.size(); ++p) {
    for (std::size_t b = 0; b < r.running[p].size(); ++b) {
      params_.per_patch[p][b].bn->running_mean = std::move(r.running[p][b].mean);
      params_.per_patch[p][b].bn->running_var = std::move(r.running[p][b].var);
    }
  }
  return std::move(r.y);
}

Tensor PifLayer::backward(const Tensor& dy) {
  PifGrads g = pif_backward(dy, cache_);
  // element-wise so ParamRef pointers stay valid
  for (std::size_t p = 0; p < grads_.size(); ++p) {
    for (std::size_t b = 0; b < grads_[p].size(); ++b) grads_[p][b] = std::move(g.per_patch[p][b]);
  }
  return std::move(g.dx);
}

std::string PifLayer::prefix(std::size_t patch, std::size_t block) const {
  std::string s = "pif.patch." + patch_label(params_.grid_dims, patch);
  if (cfg_.blocks > 1) s += "." + std::to_string(block);
  return s;
}

void PifLayer::collect_params(std::vector<ParamRef>& out) {
  for (std::size_t p = 0; p < params_.per_patch.size(); ++p) {
    for (std::size_t b = 0; b < params_.per_patch[p].size(); ++b) {
      auto& blk = params_.per_patch[p][b];
      auto& g = grads_[p][b];
      const std::string pre = prefix(p, b);
      out.push_back({pre + ".w", &blk.conv.weights, &g.dw});
      out.push_back({pre + ".b", &blk.conv.bias, &g.db});
      if (blk.bn) {
        out.push_back({pre + ".gamma", &blk.bn->gamma, &g.dgamma});
        out.push_back({pre + ".beta", &blk.bn->beta, &g.dbeta});
      }
    }
  }
}

void PifLayer::collect_buffers(std::vector<BufferRef>& out) {
  for (std::size_t p = 0; p < params_.per_patch.size(); ++p) {
    for (std::size_t b = 0; b < params_.per_patch[p].size(); ++b) {
      auto& blk = params_.per_patch[p][b];
      if (!blk.bn) continue;
      out.push_back({prefix(p, b) + ".running_mean", &blk.bn->running_mean});
      out.push_back({prefix(p, b) + ".running_var", &blk.bn->running_var});
    }
  }
}

std::size_t PifLayer::param_count() const {
  std::size_t n = 0;
  for (const auto& patch : params_.per_patch) {
    for (const auto& b : patch) n += b.conv.param_count() + (b.bn ? b.bn->param_count() : 0);
  }
  return n;
}

std::unique_ptr<Layer> PifLayer::clone() const { return std::make_unique<PifLayer>(*this); }

// ---------------------------------------------------------------------------
// Head
// ---------------------------------------------------------------------------

Shape GlobalAvgPool::output_shape(const Shape& input) const {
  if (input.size() < 2) throw ArchitectureError("gap: input has no spatial axes");
  return {input[0]};
}

Tensor GlobalAvgPool::forward(const Tensor& x, Mode) {
  x_shape_ = x.shape();
  return global_avg_pool(x);
}

Tensor GlobalAvgPool::backward(const Tensor& dy) { return global_avg_pool_backward(dy, x_shape_); }

std::unique_ptr<Layer> GlobalAvgPool::clone() const { return std::make_unique<GlobalAvgPool>(*this); }

Linear::Linear(LinearParams p) : p_(std::move(p)) {
  grads_ = {Tensor(), Tensor::zeros_like(p_.weights), Tensor::zeros_like(p_.bias)};
}

Shape Linear::output_shape(const Shape& input) const {
  if (input != Shape{p_.weights.dim(0)}) {
    throw ArchitectureError("head: expected " + std::to_string(p_.weights.dim(0)) +
                            " features, got " + shape_to_string(input));
  }
  return {p_.weights.dim(1)};
}

Tensor Linear::forward(const Tensor& x, Mode) {
  x_ = x;
  return linear_forward(x, p_);
}

Tensor Linear::backward(const Tensor& dy) {
  LinearGrads g = linear_backward(dy, x_, p_);
  grads_.dw = std::move(g.dw);
  grads_.db = std::move(g.db);
  return std::move(g.dx);
}

void Linear::collect_params(std::vector<ParamRef>& out) {
  out.push_back({"head.w", &p_.weights, &grads_.dw});
  out.push_back({"head.b", &p_.bias, &grads_.db});
}

std::unique_ptr<Layer> Linear::clone() const { return std::make_unique<Linear>(*this); }

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

Model::Model(ModelKind kind, ModelSpec spec, std::vector<std::unique_ptr<Layer>> layers)
    : kind_(kind), spec_(std::move(spec)), layers_(std::move(layers)) {
  Shape s = spec_.input_shape;
  for (const auto& l : layers_) s = l->output_shape(s);
  if (s != Shape{spec_.num_classes}) {
    throw ArchitectureError("model output " + shape_to_string(s) + " does not match " +
                            std::to_string(spec_.num_classes) + " classes");
  }
}

Model::Model(const Model& other) : kind_(other.kind_), spec_(other.spec_) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    Model tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

Tensor Model::forward(const Tensor& x, Mode mode) {
  if (x.rank() != spec_.input_shape.size() + 1 ||
      !std::equal(spec_.input_shape.begin(), spec_.input_shape.end(), x.shape().begin() + 1)) {
    throw ShapeError("model expects input [N, " + shape_to_string(spec_.input_shape) + "], got " +
                     shape_to_string(x.shape()));
  }
  Tensor t = x;
  for (auto& l : layers_) t = l->forward(t, mode);
  return t;
}

Tensor Model::backward(const Tensor& dlogits) {
  Tensor t = dlogits;
  for (std::size_t i = layers_.size(); i-- > 0;) t = layers_[i]->backward(t);
  return t;
}

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

std::vector<BufferRef> Model::buffers() {
  std::vector<BufferRef> out;
  for (auto& l : layers_) l->collect_buffers(out);
  return out;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l->param_count();
  return n;
}

std::vector<Tensor> Model::state() const {
  auto& self = const_cast<Model&>(*this);  // collection only hands out pointers; nothing is written
  std::vector<Tensor> s;
  for (const auto& p : self.parameters()) s.push_back(*p.value);
  for (const auto& b : self.buffers()) s.push_back(*b.value);
  return s;
}

void Model::load_state(const std::vector<Tensor>& state) {
  auto params = parameters();
  auto bufs = buffers();
  if (state.size() != params.size() + bufs.size()) {
    throw ShapeError("model state has " + std::to_string(state.size()) + " tensors, expected " +
                     std::to_string(params.size() + bufs.size()));
  }
  std::size_t i = 0;
  auto assign = [&](const std::string& name, Tensor* dst) {
    if (state[i].shape() != dst->shape()) {
      throw ShapeError("state tensor " + name + " has shape " + shape_to_string(state[i].shape()) +
                       ", expected " + shape_to_string(dst->shape()));
    }
    *dst = state[i++];
  };
  for (auto& p : params) assign(p.name, p.value);
  for (auto& b : bufs) assign(b.name, b.value);
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

namespace {

void check_spec_common(const ModelSpec& spec) {
  if (spec.dims != 2 && spec.dims != 3) throw ArchitectureError("dims must be 2 or 3");
  if (spec.input_shape.size() != spec.dims + 1) {
    throw ArchitectureError("input_shape must be [C, spatial...] with " + std::to_string(spec.dims) +
                            " spatial axes");
  }
  if (spec.num_classes < 2) throw ArchitectureError("num_classes must be at least 2");
  if (spec.kernel_size == 0) throw ArchitectureError("kernel_size must be positive");
}

// Appends Conv-BN-ReLU blocks and returns the per-sample output shape.
Shape add_conv_blocks(const ModelSpec& spec, std::size_t count, Rng& rng,
                      std::vector<std::unique_ptr<Layer>>& layers) {
  const auto strides = spec.strides.empty() ? default_strides(count) : spec.strides;
  if (strides.size() < count) {
    throw ArchitectureError("need " + std::to_string(count) + " strides, got " +
                            std::to_string(strides.size()));
  }
  const std::size_t k = spec.kernel_size;
  const std::size_t d = spec.dims;
  Shape shape = spec.input_shape;
  for (std::size_t i = 0; i < count; ++i) {
    if (spec.filters_per_block[i] == 0) throw ArchitectureError("filter counts must be positive");
    ConvParams conv = make_conv_params(shape[0], spec.filters_per_block[i], std::vector<std::size_t>(d, k),
                                       std::vector<std::size_t>(d, strides[i]),
                                       std::vector<std::size_t>(d, (k - 1) / 2),
                                       std::vector<std::size_t>(d, k - 1 - (k - 1) / 2));
    conv.weights = he_init(rng, conv.weights.shape());
    auto block = std::make_unique<ConvBlock>("block" + std::to_string(i + 1), std::move(conv),
                                             make_batchnorm_params(spec.filters_per_block[i]));
    shape = block->output_shape(shape);
    layers.push_back(std::move(block));
  }
  return shape;
}

void add_head(const ModelSpec& spec, std::size_t features, Rng& rng,
              std::vector<std::unique_ptr<Layer>>& layers) {
  layers.push_back(std::make_unique<GlobalAvgPool>());
  LinearParams head{he_init(rng, {features, spec.num_classes}), Tensor::create({spec.num_classes}, 0.0)};
  layers.push_back(std::make_unique<Linear>(std::move(head)));
}

}  // namespace

Model build_baseline(const ModelSpec& spec, Rng& rng) {
  check_spec_common(spec);
  if (spec.filters_per_block.size() != 5 || spec.pif) {
    throw ArchitectureError("baseline needs exactly 5 filter counts and no PIF layer");
  }
  std::vector<std::unique_ptr<Layer>> layers;
  const Shape s = add_conv_blocks(spec, 5, rng, layers);
  add_head(spec, s[0], rng, layers);
  return Model(ModelKind::baseline, spec, std::move(layers));
}

Model build_pif_model(const ModelSpec& spec, Rng& rng) {
  check_spec_common(spec);
  if (spec.filters_per_block.size() != 4 || !spec.pif) {
    throw ArchitectureError("PIF model needs exactly 4 filter counts and a PIF configuration");
  }
  std::vector<std::unique_ptr<Layer>> layers;
  const Shape s = add_conv_blocks(spec, 4, rng, layers);
  PifConfig cfg = *spec.pif;
  cfg.in_channels = s[0];
  cfg.input_size.assign(s.begin() + 1, s.end());
  ModelSpec resolved = spec;
  resolved.pif = cfg;
  PifParams params = pif_init(cfg, rng);  // validates tiling at build time
  layers.push_back(std::make_unique<PifLayer>(cfg, std::move(params)));
  add_head(spec, cfg.out_channels, rng, layers);
  return Model(ModelKind::pif, std::move(resolved), std::move(layers));
}

Model build_model(ModelKind kind, const ModelSpec& spec, Rng& rng) {
  return kind == ModelKind::baseline ? build_baseline(spec, rng) : build_pif_model(spec, rng);
}

std::size_t model_param_count(const Model& m) { return m.param_count(); }

}  // namespace pifnet
