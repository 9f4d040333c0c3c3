#include "pifnet/pif.hpp"

#include <algorithm>

#include "pifnet/errors.hpp"

namespace pifnet {

namespace {

std::vector<std::size_t> pad_before_of(const PifConfig& cfg) {
  std::vector<std::size_t> v;
  for (auto p : cfg.pad) v.push_back(p / 2);
  return v;
}

std::vector<std::size_t> pad_after_of(const PifConfig& cfg) {
  std::vector<std::size_t> v;
  for (auto p : cfg.pad) v.push_back(p - p / 2);
  return v;
}

std::size_t product(std::span<const std::size_t> v) {
  std::size_t n = 1;
  for (auto x : v) n *= x;
  return n;
}

}  // namespace

void validate(const PifConfig& cfg) {
  const std::size_t d = cfg.spatial_rank();
  if (d != 2 && d != 3) {
    throw InvalidArgumentError("PIF layer needs 2 or 3 spatial axes, got " + std::to_string(d));
  }
  if (cfg.kernel_size.size() != d || cfg.pad.size() != d || cfg.input_size.size() != d) {
    throw InvalidArgumentError("PIF patch_size, kernel_size, pad and input_size must have equal rank");
  }
  if (cfg.in_channels == 0 || cfg.out_channels == 0 || cfg.blocks == 0) {
    throw InvalidArgumentError("PIF channel and block counts must be positive");
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (cfg.patch_size[i] == 0 || cfg.kernel_size[i] == 0) {
      throw InvalidArgumentError("PIF patch and kernel sizes must be positive");
    }
    if (cfg.input_size[i] % cfg.patch_size[i] != 0) {
      throw PatchTilingError("spatial axis " + std::to_string(i) + " of size " +
                             std::to_string(cfg.input_size[i]) + " is not divisible by patch size " +
                             std::to_string(cfg.patch_size[i]));
    }
  }
  // every block must keep at least one output position
  std::vector<std::size_t> extent = cfg.patch_size;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    for (std::size_t i = 0; i < d; ++i) {
      if (extent[i] + cfg.pad[i] < cfg.kernel_size[i]) {
        throw InvalidArgumentError("PIF block " + std::to_string(b) + " axis " + std::to_string(i) +
                                   ": patch " + std::to_string(extent[i]) + " + pad " +
                                   std::to_string(cfg.pad[i]) + " is smaller than kernel " +
                                   std::to_string(cfg.kernel_size[i]));
      }
      extent[i] = extent[i] + cfg.pad[i] - cfg.kernel_size[i] + 1;
    }
  }
}

std::vector<std::size_t> pif_grid_dims(const PifConfig& cfg) {
  validate(cfg);
  std::vector<std::size_t> g;
  for (std::size_t i = 0; i < cfg.spatial_rank(); ++i) g.push_back(cfg.input_size[i] / cfg.patch_size[i]);
  return g;
}

std::vector<std::size_t> pif_patch_output_size(const PifConfig& cfg) {
  validate(cfg);
  std::vector<std::size_t> e = cfg.patch_size;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = e[i] + cfg.pad[i] - cfg.kernel_size[i] + 1;
  }
  return e;
}

std::vector<std::size_t> pif_output_size(const PifConfig& cfg) {
  auto g = pif_grid_dims(cfg);
  const auto e = pif_patch_output_size(cfg);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= e[i];
  return g;
}

std::size_t pif_param_count(const PifConfig& cfg) {
  const std::size_t cells = product(pif_grid_dims(cfg));
  const std::size_t kvol = product(cfg.kernel_size);
  std::size_t per_patch = 0;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const std::size_t cin = b == 0 ? cfg.in_channels : cfg.out_channels;
    per_patch += cfg.out_channels * cin * kvol + cfg.out_channels;
    if (cfg.with_bn_relu) per_patch += 2 * cfg.out_channels;
  }
  return cells * per_patch;
}

PifParams make_pif_params(const PifConfig& cfg) {
  PifParams p;
  p.grid_dims = pif_grid_dims(cfg);
  const std::size_t cells = product(p.grid_dims);
  const std::size_t d = cfg.spatial_rank();
  p.per_patch.resize(cells);
  for (auto& patch : p.per_patch) {
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
      PatchBlockParams block{
          make_conv_params(b == 0 ? cfg.in_channels : cfg.out_channels, cfg.out_channels,
                           cfg.kernel_size, std::vector<std::size_t>(d, 1), pad_before_of(cfg),
                           pad_after_of(cfg)),
          std::nullopt};
      if (cfg.with_bn_relu) block.bn = make_batchnorm_params(cfg.out_channels);
      patch.push_back(std::move(block));
    }
  }
  return p;
}

PifParams pif_init(const PifConfig& cfg, Rng& rng) {
  PifParams p = make_pif_params(cfg);
  for (auto& patch : p.per_patch) {
    for (auto& block : patch) block.conv.weights = he_init(rng, block.conv.weights.shape());
  }
  return p;
}

std::vector<std::size_t> grid_coords(std::span<const std::size_t> grid_dims, std::size_t patch) {
  std::vector<std::size_t> c(grid_dims.size());
  for (std::size_t a = grid_dims.size(); a-- > 0;) {
    c[a] = patch % grid_dims[a];
    patch /= grid_dims[a];
  }
  return c;
}

std::string patch_label(std::span<const std::size_t> grid_dims, std::size_t patch) {
  const auto c = grid_coords(grid_dims, patch);
  std::string s;
  for (std::size_t a = 0; a < c.size(); ++a) {
    if (a) s += '_';
    s += std::to_string(c[a]);
  }
  return s;
}

PatchGrid split(const Tensor& x, std::span<const std::size_t> patch_size) {
  if (x.rank() < 3 || patch_size.size() != x.rank() - 2) {
    throw ShapeError("split: patch size rank does not match the spatial rank of " +
                     shape_to_string(x.shape()));
  }
  const std::size_t d = patch_size.size();
  PatchGrid g;
  g.source_shape = x.shape();
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t extent = x.dim(i + 2);
    if (patch_size[i] == 0 || extent % patch_size[i] != 0) {
      throw PatchTilingError("spatial axis " + std::to_string(i) + " of size " + std::to_string(extent) +
                             " is not divisible by patch size " + std::to_string(patch_size[i]));
    }
    g.grid_dims.push_back(extent / patch_size[i]);
  }
  const std::size_t cells = product(g.grid_dims);
  std::vector<std::size_t> offsets(x.rank(), 0);
  std::vector<std::size_t> sizes = x.shape();
  for (std::size_t i = 0; i < d; ++i) sizes[i + 2] = patch_size[i];
  g.patches.reserve(cells);
  for (std::size_t p = 0; p < cells; ++p) {
    const auto c = grid_coords(g.grid_dims, p);
    for (std::size_t i = 0; i < d; ++i) offsets[i + 2] = c[i] * patch_size[i];
    g.patches.push_back(slice_region(x, offsets, sizes));
  }
  return g;
}

Tensor reassemble(const PatchGrid& grid) {
  if (grid.patches.empty() || grid.patches.size() != product(grid.grid_dims)) {
    throw GridConsistencyError("reassemble: " + std::to_string(grid.patches.size()) +
                               " patches for a grid of " + shape_to_string(grid.grid_dims));
  }
  const Shape& ps = grid.patches.front().shape();
  const std::size_t d = grid.grid_dims.size();
  if (ps.size() != d + 2) {
    throw GridConsistencyError("reassemble: patch rank does not match grid rank");
  }
  for (const auto& p : grid.patches) {
    if (p.shape() != ps) {
      throw GridConsistencyError("reassemble: patch shapes differ (" + shape_to_string(ps) + " vs " +
                                 shape_to_string(p.shape()) + ")");
    }
  }
  Shape out_shape = ps;
  for (std::size_t i = 0; i < d; ++i) out_shape[i + 2] = grid.grid_dims[i] * ps[i + 2];
  if (!grid.source_shape.empty() && grid.source_shape != out_shape) {
    throw GridConsistencyError("reassemble: grid covers " + shape_to_string(out_shape) +
                               " but source shape is " + shape_to_string(grid.source_shape));
  }
  Tensor out = Tensor::create(out_shape);
  std::vector<std::size_t> offsets(out_shape.size(), 0);
  for (std::size_t p = 0; p < grid.patches.size(); ++p) {
    const auto c = grid_coords(grid.grid_dims, p);
    for (std::size_t i = 0; i < d; ++i) offsets[i + 2] = c[i] * ps[i + 2];
    write_region_into(out, offsets, grid.patches[p]);
  }
  return out;
}

PifResult pif_forward(const Tensor& x, const PifConfig& cfg, const PifParams& params, Mode mode,
                      kernels::Exec exec) {
  validate(cfg);
  const std::size_t d = cfg.spatial_rank();
  if (x.rank() != d + 2 || x.dim(1) != cfg.in_channels ||
      !std::equal(cfg.input_size.begin(), cfg.input_size.end(), x.shape().begin() + 2)) {
    Shape expect{x.rank() > 0 ? x.dim(0) : 1, cfg.in_channels};
    expect.insert(expect.end(), cfg.input_size.begin(), cfg.input_size.end());
    throw ShapeError("PIF layer expects input " + shape_to_string(expect) + ", got " +
                     shape_to_string(x.shape()));
  }
  const auto grid_dims = pif_grid_dims(cfg);
  if (params.grid_dims != grid_dims || params.per_patch.size() != product(grid_dims)) {
    throw GridConsistencyError("PIF parameters hold " + std::to_string(params.per_patch.size()) +
                               " patches for grid " + shape_to_string(params.grid_dims) +
                               ", layer grid is " + shape_to_string(grid_dims));
  }
  for (const auto& patch : params.per_patch) {
    if (patch.size() != cfg.blocks) {
      throw GridConsistencyError("PIF parameters have the wrong number of blocks per patch");
    }
    for (const auto& b : patch) {
      if (b.bn.has_value() != cfg.with_bn_relu) {
        throw GridConsistencyError("PIF parameters disagree with with_bn_relu");
      }
    }
  }
  if (cfg.with_bn_relu && mode == Mode::train && x.dim(0) < 2) {
    throw DegenerateBatchError("per-patch batchnorm in train mode needs a batch of at least 2");
  }

  PatchGrid grid = split(x, cfg.patch_size);
  const std::size_t cells = grid.patches.size();
  PifResult r;
  r.cache.per_patch.resize(cells);
  r.cache.grid_dims = grid_dims;
  r.cache.x_shape = x.shape();
  if (cfg.with_bn_relu) r.running.resize(cells);

  const bool parallel = exec == kernels::Exec::parallel;
#pragma omp parallel for schedule(static) if (parallel)
  for (long pi = 0; pi < static_cast<long>(cells); ++pi) {
    const auto p = static_cast<std::size_t>(pi);
    Tensor t = std::move(grid.patches[p]);
    for (const auto& block : params.per_patch[p]) {
      ConvResult conv = conv_forward(t, block.conv, kernels::Exec::serial);
      PatchBlockCache bc{std::move(conv.cache), std::nullopt, Tensor()};
      t = std::move(conv.y);
      if (block.bn) {
        BatchNormResult bn = batchnorm_forward(t, *block.bn, mode);
        bc.bn = std::move(bn.cache);
        r.running[p].push_back({std::move(bn.running_mean), std::move(bn.running_var)});
        ReluResult act = relu_forward(bn.y);
        bc.pre_relu = std::move(act.x);
        t = std::move(act.y);
      }
      r.cache.per_patch[p].push_back(std::move(bc));
    }
    grid.patches[p] = std::move(t);
  }
  grid.source_shape.clear();
  r.y = reassemble(grid);
  r.cache.y_shape = r.y.shape();
  return r;
}

PifGrads pif_backward(const Tensor& dy, const PifCache& cache, kernels::Exec exec) {
  if (dy.shape() != cache.y_shape) {
    throw ShapeError("pif_backward: expected gradient of shape " + shape_to_string(cache.y_shape) +
                     ", got " + shape_to_string(dy.shape()));
  }
  const std::size_t d = cache.grid_dims.size();
  std::vector<std::size_t> patch_out(d);
  for (std::size_t i = 0; i < d; ++i) patch_out[i] = cache.y_shape[i + 2] / cache.grid_dims[i];
  PatchGrid grid = split(dy, patch_out);
  const std::size_t cells = grid.patches.size();

  PifGrads g;
  g.per_patch.resize(cells);
  const bool parallel = exec == kernels::Exec::parallel;
#pragma omp parallel for schedule(static) if (parallel)
  for (long pi = 0; pi < static_cast<long>(cells); ++pi) {
    const auto p = static_cast<std::size_t>(pi);
    const auto& blocks = cache.per_patch[p];
    Tensor t = std::move(grid.patches[p]);
    g.per_patch[p].resize(blocks.size());
    for (std::size_t b = blocks.size(); b-- > 0;) {
      const PatchBlockCache& bc = blocks[b];
      PatchBlockGrads& out = g.per_patch[p][b];
      if (bc.bn) {
        t = relu_backward(t, bc.pre_relu);
        BatchNormGrads bg = batchnorm_backward(t, *bc.bn);
        out.dgamma = std::move(bg.dgamma);
        out.dbeta = std::move(bg.dbeta);
        t = std::move(bg.dx);
      }
      ConvGrads cg = conv_backward(t, bc.conv, kernels::Exec::serial);
      out.dw = std::move(cg.dw);
      out.db = std::move(cg.db);
      t = std::move(cg.dx);
    }
    grid.patches[p] = std::move(t);
  }
  grid.source_shape = cache.x_shape;
  g.dx = reassemble(grid);
  return g;
}

}  // namespace pifnet
