#include "pifnet/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "pifnet/errors.hpp"
#include "pifnet/rng.hpp"

namespace pifnet {

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::size_t> parse_list(const std::string& s, const std::string& key) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ConfigError("meta key " + key + ": bad integer list '" + s + "'");
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::string& get(const std::map<std::string, std::string>& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw ConfigError("dataset meta is missing key '" + key + "'");
  return it->second;
}

}  // namespace

void validate(const SynthSpec& spec) {
  if (spec.dims != 2 && spec.dims != 3) throw InvalidArgumentError("data.dims must be 2 or 3");
  if (spec.image_size.size() != spec.dims) {
    throw InvalidArgumentError("data.image_size must have " + std::to_string(spec.dims) + " entries");
  }
  for (auto s : spec.image_size) {
    if (s == 0) throw InvalidArgumentError("data.image_size entries must be positive");
  }
  if (spec.signal_offset.size() != spec.dims) {
    throw RegionBoundsError("data.signal_offset must have " + std::to_string(spec.dims) + " entries");
  }
  if (spec.signal_size.size() != spec.dims) {
    throw RegionBoundsError("data.signal_size must have " + std::to_string(spec.dims) + " entries");
  }
  if (spec.jitter > 1) throw InvalidArgumentError("data.jitter must be 0 or 1 voxel");
  for (std::size_t i = 0; i < spec.dims; ++i) {
    if (spec.signal_size[i] == 0) throw RegionBoundsError("data.signal_size entries must be positive");
    if (spec.signal_offset[i] < spec.jitter ||
        spec.signal_offset[i] + spec.signal_size[i] + spec.jitter > spec.image_size[i]) {
      throw RegionBoundsError("data.signal_offset/data.signal_size: signal region [" +
                              std::to_string(spec.signal_offset[i]) + ", " +
                              std::to_string(spec.signal_offset[i] + spec.signal_size[i]) +
                              ") with jitter " + std::to_string(spec.jitter) +
                              " does not fit image axis " + std::to_string(i) + " of size " +
                              std::to_string(spec.image_size[i]));
    }
  }
  if (spec.train_per_class == 0 || spec.val_per_class == 0 || spec.test_per_class == 0) {
    throw InvalidArgumentError("data.train/val/test_per_class must be positive");
  }
  if (!(spec.signal_strength >= 0.0) || !(spec.white_noise >= 0.0)) {
    throw InvalidArgumentError("data.signal_strength and data.white_noise must be non-negative");
  }
  if (spec.background_modes == 0 && spec.white_noise == 0.0) {
    throw InvalidArgumentError("data: background needs cosine modes or white noise");
  }
}

namespace {

Rng sample_rng(const SynthSpec& spec, std::size_t i) {
  return Rng(Rng::mix(Rng::mix(spec.seed, streams::kSynthSample), i));
}

// 3D index space; 2D images use depth 1.
std::array<std::size_t, 3> extent3(const SynthSpec& spec) {
  std::array<std::size_t, 3> e{1, 1, 1};
  const std::size_t lead = 3 - spec.dims;
  for (std::size_t i = 0; i < spec.dims; ++i) e[lead + i] = spec.image_size[i];
  return e;
}

std::vector<double> background_values(const SynthSpec& spec, Rng& rng) {
  const auto e = extent3(spec);
  const std::size_t vol = e[0] * e[1] * e[2];
  std::vector<double> f(vol, 0.0);
  const std::size_t lead = 3 - spec.dims;
  for (std::size_t m = 0; m < spec.background_modes; ++m) {
    std::array<double, 3> freq{0, 0, 0};
    bool any = false;
    for (std::size_t a = lead; a < 3; ++a) {
      freq[a] = static_cast<double>(rng.integer(0, static_cast<std::int64_t>(spec.max_frequency)));
      any = any || freq[a] != 0.0;
    }
    if (!any) freq[2] = 1.0;
    const double amp = rng.normal();
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t z = 0; z < e[0]; ++z) {
      for (std::size_t y = 0; y < e[1]; ++y) {
        for (std::size_t x = 0; x < e[2]; ++x) {
          const double arg = 2.0 * std::numbers::pi *
                                 (freq[0] * static_cast<double>(z) / static_cast<double>(e[0]) +
                                  freq[1] * static_cast<double>(y) / static_cast<double>(e[1]) +
                                  freq[2] * static_cast<double>(x) / static_cast<double>(e[2])) +
                             phase;
          f[(z * e[1] + y) * e[2] + x] += amp * std::cos(arg);
        }
      }
    }
  }
  for (double& v : f) v += spec.white_noise * rng.normal();

  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(vol);
  double var = 0.0;
  for (double v : f) var += (v - mean) * (v - mean);
  var /= static_cast<double>(vol);
  const double inv_sd = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  for (double& v : f) v = (v - mean) * inv_sd;
  return f;
}

}  // namespace

Tensor synth_background(const SynthSpec& spec, std::size_t sample_index) {
  validate(spec);
  Rng rng = sample_rng(spec, sample_index);
  Shape shape{1, 1};
  shape.insert(shape.end(), spec.image_size.begin(), spec.image_size.end());
  return Tensor::from_data(shape, background_values(spec, rng));
}

Dataset generate(const SynthSpec& spec) {
  validate(spec);
  const std::size_t n = spec.total();
  Shape shape{n, 1};
  shape.insert(shape.end(), spec.image_size.begin(), spec.image_size.end());
  Dataset d;
  d.images = Tensor::create(shape);
  d.labels.resize(n);
  d.meta = synth_meta(spec);

  const auto e = extent3(spec);
  const std::size_t vol = e[0] * e[1] * e[2];
  const std::size_t lead = 3 - spec.dims;
  double* out = d.images.data().data();

#pragma omp parallel for schedule(static)
  for (long li = 0; li < static_cast<long>(n); ++li) {
    const auto i = static_cast<std::size_t>(li);
    const int label = static_cast<int>(i % 2);
    d.labels[i] = label;
    Rng rng = sample_rng(spec, i);
    std::vector<double> f = background_values(spec, rng);
    // jitter is drawn for every sample so both classes consume the stream identically
    std::array<long, 3> shift{0, 0, 0};
    for (std::size_t a = 0; a < spec.dims; ++a) {
      shift[lead + a] = static_cast<long>(
          rng.integer(-static_cast<std::int64_t>(spec.jitter), static_cast<std::int64_t>(spec.jitter)));
    }
    if (label == 1 && spec.signal_strength != 0.0) {
      std::array<std::size_t, 3> lo{0, 0, 0}, hi{1, 1, 1};
      for (std::size_t a = 0; a < spec.dims; ++a) {
        lo[lead + a] = static_cast<std::size_t>(static_cast<long>(spec.signal_offset[a]) + shift[lead + a]);
        hi[lead + a] = lo[lead + a] + spec.signal_size[a];
      }
      for (std::size_t z = lo[0]; z < hi[0]; ++z) {
        for (std::size_t y = lo[1]; y < hi[1]; ++y) {
          for (std::size_t x = lo[2]; x < hi[2]; ++x) f[(z * e[1] + y) * e[2] + x] += spec.signal_strength;
        }
      }
    }
    std::copy(f.begin(), f.end(), out + i * vol);
  }
  return d;
}

std::map<std::string, std::string> synth_meta(const SynthSpec& spec) {
  return {
      {"generator", "pifnet-synth-v1"},
      {"dims", std::to_string(spec.dims)},
      {"image_size", join(spec.image_size)},
      {"train_per_class", std::to_string(spec.train_per_class)},
      {"val_per_class", std::to_string(spec.val_per_class)},
      {"test_per_class", std::to_string(spec.test_per_class)},
      {"signal_offset", join(spec.signal_offset)},
      {"signal_size", join(spec.signal_size)},
      {"signal_strength", format_double(spec.signal_strength)},
      {"background_modes", std::to_string(spec.background_modes)},
      {"max_frequency", std::to_string(spec.max_frequency)},
      {"white_noise", format_double(spec.white_noise)},
      {"jitter", std::to_string(spec.jitter)},
      {"seed", std::to_string(spec.seed)},
  };
}

SynthSpec synth_spec_from_meta(const std::map<std::string, std::string>& meta) {
  SynthSpec s;
  try {
    s.dims = std::stoul(get(meta, "dims"));
    s.image_size = parse_list(get(meta, "image_size"), "image_size");
    s.train_per_class = std::stoul(get(meta, "train_per_class"));
    s.val_per_class = std::stoul(get(meta, "val_per_class"));
    s.test_per_class = std::stoul(get(meta, "test_per_class"));
    s.signal_offset = parse_list(get(meta, "signal_offset"), "signal_offset");
    s.signal_size = parse_list(get(meta, "signal_size"), "signal_size");
    s.signal_strength = std::stod(get(meta, "signal_strength"));
    s.background_modes = std::stoul(get(meta, "background_modes"));
    s.max_frequency = std::stoul(get(meta, "max_frequency"));
    s.white_noise = std::stod(get(meta, "white_noise"));
    s.jitter = std::stoul(get(meta, "jitter"));
    s.seed = std::stoull(get(meta, "seed"));
  } catch (const std::invalid_argument&) {
    throw ConfigError("dataset meta holds a malformed number");
  } catch (const std::out_of_range&) {
    throw ConfigError("dataset meta holds an out-of-range number");
  }
  return s;
}

DataSplits split_dataset(const Dataset& d) {
  const SynthSpec s = synth_spec_from_meta(d.meta);
  if (d.size() != s.total()) {
    throw ShapeError("dataset holds " + std::to_string(d.size()) + " samples, meta expects " +
                     std::to_string(s.total()));
  }
  const std::size_t a = 2 * s.train_per_class;
  const std::size_t b = a + 2 * s.val_per_class;
  return {take_range(d, 0, a), take_range(d, a, b), take_range(d, b, d.size())};
}

std::uint64_t meta_hash(const std::map<std::string, std::string>& meta) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : meta) {
    feed(k);
    feed(" = ");
    feed(v);
    feed("\n");
  }
  return h;
}

}  // namespace pifnet
