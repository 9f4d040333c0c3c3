#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pifnet/dataset.hpp"

namespace pifnet {

/// Two-class "spatially normalised" image generator.
///
/// Every image is a smooth random background (a few low-frequency cosine
/// modes with random phases plus white noise, standardised to zero mean and
/// unit variance). Class-1 images additionally carry `signal_strength` added
/// inside the fixed `signal_offset`/`signal_size` box, optionally shifted by
/// up to `jitter` voxels per axis. The class difference therefore lives at
/// the same location in every sample.
struct SynthSpec {
  std::size_t dims = 2;
  std::vector<std::size_t> image_size{32, 32};
  std::size_t train_per_class = 200;
  std::size_t val_per_class = 100;
  std::size_t test_per_class = 200;
  std::vector<std::size_t> signal_offset{8, 12};
  std::vector<std::size_t> signal_size{8, 8};
  double signal_strength = 0.6;
  std::size_t background_modes = 4;
  std::size_t max_frequency = 2;
  double white_noise = 0.1;
  std::size_t jitter = 0;
  std::uint64_t seed = 1;

  std::size_t per_class() const { return train_per_class + val_per_class + test_per_class; }
  std::size_t total() const { return 2 * per_class(); }
};

/// Throws RegionBoundsError (naming the offending field) or InvalidArgumentError.
void validate(const SynthSpec& spec);

/// Samples are laid out train, val, test; within each split labels
/// alternate 0, 1, 0, 1. Sample i draws from its own stream derived from
/// (seed, i), so generation order does not affect the result.
Dataset generate(const SynthSpec& spec);

/// Background field of one sample before the class signal is added.
Tensor synth_background(const SynthSpec& spec, std::size_t sample_index);

std::map<std::string, std::string> synth_meta(const SynthSpec& spec);
SynthSpec synth_spec_from_meta(const std::map<std::string, std::string>& meta);

struct DataSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Splits a generated dataset using the per-class counts stored in its meta.
DataSplits split_dataset(const Dataset& d);

/// FNV-1a 64 over the meta dump; used as a short spec fingerprint.
std::uint64_t meta_hash(const std::map<std::string, std::string>& meta);

}  // namespace pifnet
