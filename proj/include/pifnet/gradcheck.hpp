#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pifnet/tensor.hpp"

namespace pifnet {

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
double relative_error(double analytic, double numeric);

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 2024;
  /// Test fixture: negate the input gradient of the shared convolution.
  bool corrupt_conv_backward = false;
};

struct ComponentResult {
  std::string component;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::string worst_location;  // "<tensor>[<flat index>]"
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<ComponentResult> components;
  double seconds = 0.0;

  bool all_passed() const;
};

/// A tensor under test together with the analytic gradient computed for it.
struct CheckedTensor {
  std::string name;
  Tensor* value;
  Tensor analytic;
};

/// Central differences of `loss` with respect to every element of every
/// checked tensor, perturbed in place and restored afterwards.
ComponentResult check_gradients(const std::string& component, std::vector<CheckedTensor> tensors,
                                const std::function<double()>& loss, const GradcheckOptions& opt);

/// Every layer (conv 2D/3D, batchnorm train/eval, relu, linear, pooling,
/// loss, PIF variants) plus miniature baseline and PIF models.
GradcheckReport run_gradcheck(const GradcheckOptions& opt = {});

}  // namespace pifnet
