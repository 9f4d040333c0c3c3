#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pifnet/tensor.hpp"

namespace pifnet {

/// Images [N, 1, spatial...], one integer label per image, and free-form
/// provenance metadata (generator spec, seed).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::map<std::string, std::string> meta;

  std::size_t size() const { return labels.size(); }
  /// Per-sample shape [C, spatial...].
  Shape sample_shape() const;
  /// Checks N == labels.size().
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Rows of `d` at `indices`, in that order. Metadata is copied.
Dataset take(const Dataset& d, std::span<const std::size_t> indices);
/// Rows [begin, end).
Dataset take_range(const Dataset& d, std::size_t begin, std::size_t end);

std::vector<std::size_t> class_counts(std::span<const int> labels, std::size_t num_classes);

/// Directory layout: images.pift, labels.csv (one integer per line),
/// meta.txt (`key = value` lines).
void save_dataset(const Dataset& d, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace pifnet
