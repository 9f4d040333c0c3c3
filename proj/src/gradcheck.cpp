#include "pifnet/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "pifnet/layers.hpp"
#include "pifnet/model.hpp"
#include "pifnet/pif.hpp"

namespace pifnet {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

bool GradcheckReport::all_passed() const {
  return std::all_of(components.begin(), components.end(), [](const auto& c) { return c.passed; });
}

ComponentResult check_gradients(const std::string& component, std::vector<CheckedTensor> tensors,
                                const std::function<double()>& loss, const GradcheckOptions& opt) {
  ComponentResult r;
  r.component = component;
  for (auto& t : tensors) {
    for (std::size_t i = 0; i < t.value->size(); ++i) {
      double& v = (*t.value)[i];
      const double saved = v;
      v = saved + opt.step;
      const double up = loss();
      v = saved - opt.step;
      const double down = loss();
      v = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double analytic = t.analytic[i];
      const double err = relative_error(analytic, numeric);
      ++r.checked;
      if (err > r.max_rel_error || r.worst_location.empty()) {
        r.max_rel_error = err;
        r.worst_location = t.name + "[" + std::to_string(i) + "]";
        r.analytic = analytic;
        r.numeric = numeric;
      }
    }
  }
  r.passed = r.max_rel_error <= opt.tolerance;
  return r;
}

namespace {

// Values bounded away from 0 so ReLU kinks stay out of reach of the step.
Tensor random_away_from_zero(Rng& rng, Shape shape) {
  Tensor t = rng_uniform(rng, std::move(shape), 0.1, 1.0);
  for (double& v : t.data()) {
    if (rng.bernoulli(0.5)) v = -v;
  }
  return t;
}

double weighted_sum(const Tensor& y, const Tensor& r) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<long double>(y[i]) * r[i];
  return static_cast<double>(s);
}

ComponentResult check_conv(const std::string& name, Rng& rng, const Shape& xshape, ConvParams p,
                           const GradcheckOptions& opt) {
  Tensor x = rng_uniform(rng, xshape, -1.0, 1.0);
  p.weights = rng_uniform(rng, p.weights.shape(), -1.0, 1.0);
  p.bias = rng_uniform(rng, p.bias.shape(), -1.0, 1.0);
  ConvResult fwd = conv_forward(x, p);
  const Tensor r = rng_uniform(rng, fwd.y.shape(), -1.0, 1.0);
  ConvGrads g = conv_backward(r, fwd.cache);
  if (opt.corrupt_conv_backward) {
    for (double& v : g.dx.data()) v = -v;
  }
  auto loss = [&] { return weighted_sum(conv_forward(x, p).y, r); };
  return check_gradients(name,
                         {{"x", &x, g.dx}, {"w", &p.weights, g.dw}, {"b", &p.bias, g.db}}, loss, opt);
}

ComponentResult check_batchnorm(const std::string& name, Rng& rng, Mode mode, const GradcheckOptions& opt) {
  Tensor x = rng_uniform(rng, {3, 2, 3, 3}, -2.0, 2.0);
  BatchNormParams p = make_batchnorm_params(2);
  p.gamma = rng_uniform(rng, {2}, 0.5, 1.5);
  p.beta = rng_uniform(rng, {2}, -0.5, 0.5);
  p.running_mean = rng_uniform(rng, {2}, -0.5, 0.5);
  p.running_var = rng_uniform(rng, {2}, 0.5, 2.0);
  BatchNormResult fwd = batchnorm_forward(x, p, mode);
  const Tensor r = rng_uniform(rng, fwd.y.shape(), -1.0, 1.0);
  BatchNormGrads g = batchnorm_backward(r, fwd.cache);
  auto loss = [&] { return weighted_sum(batchnorm_forward(x, p, mode).y, r); };
  return check_gradients(name, {{"x", &x, g.dx}, {"gamma", &p.gamma, g.dgamma}, {"beta", &p.beta, g.dbeta}},
                         loss, opt);
}

ComponentResult check_pif(const std::string& name, Rng& rng, PifConfig cfg, std::size_t batch,
                          const GradcheckOptions& opt) {
  Shape xshape{batch, cfg.in_channels};
  xshape.insert(xshape.end(), cfg.input_size.begin(), cfg.input_size.end());
  Tensor x = rng_uniform(rng, xshape, -1.0, 1.0);
  PifParams p = pif_init(cfg, rng);
  for (auto& patch : p.per_patch) {
    for (auto& b : patch) {
      b.conv.bias = rng_uniform(rng, b.conv.bias.shape(), -0.5, 0.5);
      if (b.bn) {
        b.bn->gamma = rng_uniform(rng, b.bn->gamma.shape(), 0.5, 1.5);
        b.bn->beta = rng_uniform(rng, b.bn->beta.shape(), -0.5, 0.5);
      }
    }
  }
  PifResult fwd = pif_forward(x, cfg, p, Mode::train);
  const Tensor r = rng_uniform(rng, fwd.y.shape(), -1.0, 1.0);
  PifGrads g = pif_backward(r, fwd.cache);
  std::vector<CheckedTensor> checked{{"x", &x, g.dx}};
  for (std::size_t pi = 0; pi < p.per_patch.size(); ++pi) {
    const std::string label = "patch" + patch_label(p.grid_dims, pi);
    for (std::size_t b = 0; b < p.per_patch[pi].size(); ++b) {
      auto& blk = p.per_patch[pi][b];
      auto& gb = g.per_patch[pi][b];
      const std::string pre = label + "." + std::to_string(b);
      checked.push_back({pre + ".w", &blk.conv.weights, gb.dw});
      checked.push_back({pre + ".b", &blk.conv.bias, gb.db});
      if (blk.bn) {
        checked.push_back({pre + ".gamma", &blk.bn->gamma, gb.dgamma});
        checked.push_back({pre + ".beta", &blk.bn->beta, gb.dbeta});
      }
    }
  }
  auto loss = [&] { return weighted_sum(pif_forward(x, cfg, p, Mode::train).y, r); };
  return check_gradients(name, std::move(checked), loss, opt);
}

ComponentResult check_model(const std::string& name, Rng& rng, ModelKind kind, const GradcheckOptions& opt) {
  ModelSpec spec;
  spec.dims = 2;
  spec.input_shape = {1, 12, 12};
  spec.num_classes = 3;
  if (kind == ModelKind::baseline) {
    spec.filters_per_block = {2, 2, 2, 2, 2};
    spec.strides = {1, 2, 2, 1, 1};
  } else {
    spec.filters_per_block = {2, 2, 2, 2};
    spec.strides = {1, 2, 1, 1};
    PifConfig pif;
    pif.patch_size = {3, 3};
    pif.kernel_size = {2, 2};
    pif.pad = {1, 1};
    pif.out_channels = 2;
    spec.pif = pif;
  }
  Model model = build_model(kind, spec, rng);
  // non-trivial BN affine parameters
  for (auto& p : model.parameters()) {
    if (p.name.ends_with(".gamma")) *p.value = rng_uniform(rng, p.value->shape(), 0.5, 1.5);
    if (p.name.ends_with(".beta") || p.name.ends_with(".b")) *p.value = rng_uniform(rng, p.value->shape(), -0.3, 0.3);
  }
  Tensor x = rng_uniform(rng, {3, 1, 12, 12}, -1.0, 1.0);
  const std::vector<int> labels{0, 2, 1};
  const std::vector<Tensor> initial = model.state();

  LossResult l = softmax_cross_entropy(model.forward(x, Mode::train), labels);
  model.backward(l.dlogits);
  std::vector<CheckedTensor> checked;
  for (auto& p : model.parameters()) checked.push_back({p.name, p.value, *p.grad});
  // running statistics change on every train-mode call; reset them so every
  // evaluation sees the same model
  auto loss = [&] {
    auto bufs = model.buffers();
    const std::size_t first_buffer = initial.size() - bufs.size();
    for (std::size_t i = 0; i < bufs.size(); ++i) *bufs[i].value = initial[first_buffer + i];
    return softmax_cross_entropy(model.forward(x, Mode::train), labels).loss;
  };
  return check_gradients(name, std::move(checked), loss, opt);
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport rep;
  Rng rng = Rng(opt.seed).derive(streams::kGradcheck);

  rep.components.push_back(check_conv("conv2d", rng, {2, 2, 5, 6},
                                      make_conv_params(2, 3, {3, 2}, {2, 1}, {1, 0}, {0, 1}), opt));
  rep.components.push_back(check_conv("conv3d", rng, {2, 2, 4, 4, 3},
                                      make_conv_params(2, 2, {2, 3, 2}, {1, 2, 1}, {1, 1, 0}, {0, 1, 1}),
                                      opt));
  rep.components.push_back(check_batchnorm("batchnorm_train", rng, Mode::train, opt));
  rep.components.push_back(check_batchnorm("batchnorm_eval", rng, Mode::eval, opt));

  {
    Tensor x = random_away_from_zero(rng, {2, 3, 4, 4});
    const Tensor r = rng_uniform(rng, x.shape(), -1.0, 1.0);
    const Tensor dx = relu_backward(r, x);
    rep.components.push_back(check_gradients(
        "relu", {{"x", &x, dx}}, [&] { return weighted_sum(relu_forward(x).y, r); }, opt));
  }
  {
    Tensor x = rng_uniform(rng, {3, 4}, -1.0, 1.0);
    LinearParams p{rng_uniform(rng, {4, 3}, -1.0, 1.0), rng_uniform(rng, {3}, -1.0, 1.0)};
    const Tensor r = rng_uniform(rng, {3, 3}, -1.0, 1.0);
    LinearGrads g = linear_backward(r, x, p);
    rep.components.push_back(check_gradients(
        "linear", {{"x", &x, g.dx}, {"w", &p.weights, g.dw}, {"b", &p.bias, g.db}},
        [&] { return weighted_sum(linear_forward(x, p), r); }, opt));
  }
  {
    Tensor x = rng_uniform(rng, {2, 3, 3, 4}, -1.0, 1.0);
    const Tensor r = rng_uniform(rng, {2, 3}, -1.0, 1.0);
    const Tensor dx = global_avg_pool_backward(r, x.shape());
    rep.components.push_back(check_gradients(
        "global_avg_pool", {{"x", &x, dx}}, [&] { return weighted_sum(global_avg_pool(x), r); }, opt));
  }
  {
    Tensor logits = rng_uniform(rng, {4, 3}, -2.0, 2.0);
    const std::vector<int> labels{0, 2, 1, 2};
    const Tensor d = softmax_cross_entropy(logits, labels).dlogits;
    rep.components.push_back(check_gradients(
        "softmax_cross_entropy", {{"logits", &logits, d}},
        [&] { return softmax_cross_entropy(logits, labels).loss; }, opt));
  }

  PifConfig base;
  base.input_size = {4, 4};
  base.patch_size = {2, 2};
  base.kernel_size = {2, 2};
  base.pad = {1, 1};
  base.in_channels = 2;
  base.out_channels = 2;
  rep.components.push_back(check_pif("pif2d", rng, base, 2, opt));

  PifConfig local = base;
  local.kernel_size = {3, 3};  // s + p == k: one output per patch
  rep.components.push_back(check_pif("pif2d_local", rng, local, 2, opt));

  PifConfig with_bn = base;
  with_bn.with_bn_relu = true;
  rep.components.push_back(check_pif("pif2d_bn_relu", rng, with_bn, 3, opt));

  PifConfig two_blocks = base;
  two_blocks.blocks = 2;
  rep.components.push_back(check_pif("pif2d_two_blocks", rng, two_blocks, 2, opt));

  PifConfig vol;
  vol.input_size = {4, 4, 2};
  vol.patch_size = {2, 2, 1};
  vol.kernel_size = {2, 1, 1};
  vol.pad = {1, 0, 0};
  vol.in_channels = 2;
  vol.out_channels = 2;
  rep.components.push_back(check_pif("pif3d", rng, vol, 2, opt));

  rep.components.push_back(check_model("model_baseline", rng, ModelKind::baseline, opt));
  rep.components.push_back(check_model("model_pif", rng, ModelKind::pif, opt));

  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace pifnet
