#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pifnet/kernels.hpp"
#include "pifnet/layers.hpp"
#include "pifnet/rng.hpp"
#include "pifnet/tensor.hpp"

namespace pifnet {

/// Patch individual filter layer configuration.
///
/// The feature map (spatial extent `input_size`) is cut into a disjoint grid
/// of `patch_size` blocks. Every block runs through its own stack of
/// `blocks` convolutions (kernel `kernel_size`, stride 1, total padding
/// `pad` per axis split floor/ceil before/after), optionally followed by
/// per-patch BatchNorm and ReLU. Outputs are written back in grid order.
struct PifConfig {
  std::vector<std::size_t> input_size;
  std::vector<std::size_t> patch_size;
  std::vector<std::size_t> kernel_size;
  std::vector<std::size_t> pad;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  bool with_bn_relu = false;
  std::size_t blocks = 1;

  std::size_t spatial_rank() const { return patch_size.size(); }
};

/// Throws InvalidArgumentError for malformed fields and PatchTilingError when
/// input_size is not a multiple of patch_size.
void validate(const PifConfig& cfg);

std::vector<std::size_t> pif_grid_dims(const PifConfig& cfg);
/// Spatial extent of one processed patch: s + p - k + 1 per block.
std::vector<std::size_t> pif_patch_output_size(const PifConfig& cfg);
std::vector<std::size_t> pif_output_size(const PifConfig& cfg);

/// grid cells * (C_out * C_in * prod(k) + C_out) [+ 2 * C_out with BN],
/// summed over the per-patch block stack.
std::size_t pif_param_count(const PifConfig& cfg);

struct PatchBlockParams {
  ConvParams conv;
  std::optional<BatchNormParams> bn;
};

/// per_patch[patch][block], patches in row-major grid order. Nothing is shared.
struct PifParams {
  std::vector<std::size_t> grid_dims;
  std::vector<std::vector<PatchBlockParams>> per_patch;

  std::size_t patch_count() const { return per_patch.size(); }
};

/// Zero weights and biases; BN at identity statistics.
PifParams make_pif_params(const PifConfig& cfg);
/// He-uniform weights drawn patch by patch in grid order, zero biases.
PifParams pif_init(const PifConfig& cfg, Rng& rng);

/// Grid coordinates of the patch with flat index `patch`.
std::vector<std::size_t> grid_coords(std::span<const std::size_t> grid_dims, std::size_t patch);
/// "i_j" or "i_j_l".
std::string patch_label(std::span<const std::size_t> grid_dims, std::size_t patch);

struct PatchGrid {
  std::vector<Tensor> patches;
  std::vector<std::size_t> grid_dims;
  Shape source_shape;
};

PatchGrid split(const Tensor& x, std::span<const std::size_t> patch_size);
Tensor reassemble(const PatchGrid& grid);

struct PatchBlockCache {
  ConvCache conv;
  std::optional<BatchNormCache> bn;
  Tensor pre_relu;
};

struct PifCache {
  std::vector<std::vector<PatchBlockCache>> per_patch;
  std::vector<std::size_t> grid_dims;
  Shape x_shape;
  Shape y_shape;
};

struct RunningStats {
  Tensor mean;
  Tensor var;
};

struct PifResult {
  Tensor y;
  PifCache cache;
  /// Updated BN statistics [patch][block]; empty unless with_bn_relu.
  std::vector<std::vector<RunningStats>> running;
};

struct PatchBlockGrads {
  Tensor dw;
  Tensor db;
  Tensor dgamma;  // empty without BN
  Tensor dbeta;
};

struct PifGrads {
  Tensor dx;
  std::vector<std::vector<PatchBlockGrads>> per_patch;
};

/// With Exec::parallel the patches are distributed over OpenMP threads;
/// each patch is computed by the serial kernels either way.
PifResult pif_forward(const Tensor& x, const PifConfig& cfg, const PifParams& params,
                      Mode mode = Mode::train, kernels::Exec exec = kernels::default_exec());
PifGrads pif_backward(const Tensor& dy, const PifCache& cache,
                      kernels::Exec exec = kernels::default_exec());

}  // namespace pifnet
