#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "pifnet/errors.hpp"
#include "pifnet/synth.hpp"

using namespace pifnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(PIFNET_TEST_TMP) / "synth" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

bool in_patch(const SynthSpec& s, std::size_t h, std::size_t w) {
  return h >= s.signal_offset[0] && h < s.signal_offset[0] + s.signal_size[0] && w >= s.signal_offset[1] &&
         w < s.signal_offset[1] + s.signal_size[1];
}

}  // namespace

TEST(Synth, DefaultShapeAndBalance) {
  const SynthSpec spec;
  const Dataset d = generate(spec);
  EXPECT_EQ(d.images.shape(), (Shape{1000, 1, 32, 32}));
  EXPECT_EQ(class_counts(d.labels, 2), (std::vector<std::size_t>{500, 500}));
  const DataSplits s = split_dataset(d);
  EXPECT_EQ(s.train.size(), 400u);
  EXPECT_EQ(s.val.size(), 200u);
  EXPECT_EQ(s.test.size(), 400u);
  for (const Dataset* part : {&s.train, &s.val, &s.test}) {
    const auto c = class_counts(part->labels, 2);
    EXPECT_EQ(c[0], c[1]);
  }
}

TEST(Synth, Deterministic) {
  SynthSpec spec;
  spec.train_per_class = 20;
  spec.val_per_class = 5;
  spec.test_per_class = 5;
  EXPECT_EQ(generate(spec), generate(spec));
}

TEST(Synth, BackgroundHasUnitVariance) {
  const SynthSpec spec;
  const Tensor b = synth_background(spec, 17);
  double mean = b.sum() / static_cast<double>(b.size()), var = 0.0;
  for (double v : b.data()) var += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var / static_cast<double>(b.size()), 1.0, 1e-12);
}

TEST(Synth, ClassDifferenceIsTheTemplate) {
  SynthSpec spec;
  spec.train_per_class = 10;
  spec.val_per_class = 1;
  spec.test_per_class = 1;
  const Dataset d = generate(spec);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Tensor bg = synth_background(spec, i);
    for (std::size_t h = 0; h < 32; ++h)
      for (std::size_t w = 0; w < 32; ++w) {
        const double diff = d.images.at({i, 0, h, w}) - bg.at({0, 0, h, w});
        if (d.labels[i] == 1 && in_patch(spec, h, w)) {
          EXPECT_NEAR(diff, spec.signal_strength, 1e-12);
        } else {
          ASSERT_EQ(diff, 0.0) << "sample " << i << " at " << h << "," << w;
        }
      }
  }
}

TEST(Synth, MeanDifferenceIsLocal) {
  SynthSpec spec;
  spec.seed = 99;
  const Dataset d = generate(spec);  // 500 per class
  const std::size_t n = d.size(), px = 32 * 32;
  std::vector<double> m[2], q[2];
  std::size_t cnt[2] = {0, 0};
  for (int c = 0; c < 2; ++c) m[c].assign(px, 0.0), q[c].assign(px, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = d.labels[i];
    ++cnt[c];
    for (std::size_t p = 0; p < px; ++p) {
      const double v = d.images[i * px + p];
      m[c][p] += v;
      q[c][p] += v * v;
    }
  }
  double outside_sum = 0.0, outside_var = 0.0;
  std::size_t outside = 0, outside_over = 0;
  for (std::size_t p = 0; p < px; ++p) {
    double mean[2], var[2];
    for (int c = 0; c < 2; ++c) {
      mean[c] = m[c][p] / static_cast<double>(cnt[c]);
      var[c] = (q[c][p] / static_cast<double>(cnt[c]) - mean[c] * mean[c]) * cnt[c] / (cnt[c] - 1.0);
    }
    const double diff = mean[1] - mean[0];
    const double se = std::sqrt(var[0] / cnt[0] + var[1] / cnt[1]);
    if (in_patch(spec, p / 32, p % 32)) {
      EXPECT_LT(std::abs(diff - spec.signal_strength), 3 * se) << "pixel " << p;
    } else {
      ++outside;
      outside_over += std::abs(diff) >= 3 * se;
      outside_sum += diff;
      outside_var += se * se;
    }
  }
  // region-wide mean difference, with a conservative standard error that
  // ignores the positive correlation between pixels
  const double region_diff = outside_sum / static_cast<double>(outside);
  EXPECT_LT(std::abs(region_diff), 3 * std::sqrt(outside_var) / std::sqrt(static_cast<double>(outside)));
  // pixelwise exceedances at the chance rate (0.27%) and nowhere near the patch's
  EXPECT_LE(outside_over, outside / 50);
}

TEST(Synth, ZeroStrengthMakesClassesIdentical) {
  SynthSpec spec;
  spec.signal_strength = 0.0;
  spec.train_per_class = 4;
  spec.val_per_class = 1;
  spec.test_per_class = 1;
  const Dataset d = generate(spec);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Tensor bg = synth_background(spec, i);
    for (std::size_t p = 0; p < 1024; ++p) ASSERT_EQ(d.images[i * 1024 + p], bg[p]);
  }
}

TEST(Synth, SeedIsolation) {
  SynthSpec a;
  a.train_per_class = 10;
  a.val_per_class = 2;
  a.test_per_class = 2;
  SynthSpec b = a;
  b.seed = a.seed + 1;
  const Dataset da = generate(a), db = generate(b);
  EXPECT_EQ(da.labels, db.labels);
  EXPECT_NE(da.images, db.images);
}

TEST(Synth, RegionOutOfBoundsNamesTheField) {
  SynthSpec spec;
  spec.signal_offset = {28, 0};
  try {
    generate(spec);
    FAIL();
  } catch (const RegionBoundsError& e) {
    EXPECT_NE(std::string(e.what()).find("signal_offset"), std::string::npos);
  }
  spec.signal_offset = {1, 1};
  spec.jitter = 2;
  EXPECT_THROW(validate(spec), InvalidArgumentError);
  spec.jitter = 1;
  spec.signal_offset = {0, 4};
  EXPECT_THROW(validate(spec), RegionBoundsError);
  spec.signal_offset = {4, 4, 4};
  EXPECT_THROW(validate(spec), RegionBoundsError);
}

TEST(Synth, JitterMovesTheTemplateByAtMostOne) {
  SynthSpec spec;
  spec.jitter = 1;
  spec.train_per_class = 20;
  spec.val_per_class = 1;
  spec.test_per_class = 1;
  const Dataset d = generate(spec);
  for (std::size_t i = 1; i < d.size(); i += 2) {
    const Tensor bg = synth_background(spec, i);
    for (std::size_t h = 0; h < 32; ++h)
      for (std::size_t w = 0; w < 32; ++w) {
        const double diff = d.images.at({i, 0, h, w}) - bg.at({0, 0, h, w});
        const bool near = h + 1 >= spec.signal_offset[0] && h <= spec.signal_offset[0] + spec.signal_size[0] &&
                          w + 1 >= spec.signal_offset[1] && w <= spec.signal_offset[1] + spec.signal_size[1];
        if (!near) ASSERT_EQ(diff, 0.0);
      }
  }
}

TEST(Synth, VolumetricGeneration) {
  SynthSpec spec;
  spec.dims = 3;
  spec.image_size = {8, 8, 8};
  spec.signal_offset = {2, 2, 2};
  spec.signal_size = {4, 4, 4};
  spec.train_per_class = 3;
  spec.val_per_class = 1;
  spec.test_per_class = 1;
  const Dataset d = generate(spec);
  EXPECT_EQ(d.images.shape(), (Shape{10, 1, 8, 8, 8}));
  const Tensor bg = synth_background(spec, 1);
  EXPECT_NEAR(d.images.at({1, 0, 3, 3, 3}) - bg.at({0, 0, 3, 3, 3}), spec.signal_strength, 1e-12);
  EXPECT_EQ(d.images.at({1, 0, 0, 0, 0}), bg.at({0, 0, 0, 0, 0}));
}

TEST(Synth, MetaRoundTrip) {
  SynthSpec spec;
  spec.white_noise = 0.1;
  spec.signal_strength = 1.0 / 3.0;
  spec.seed = 12345678901234ULL;
  const SynthSpec back = synth_spec_from_meta(synth_meta(spec));
  EXPECT_EQ(synth_meta(back), synth_meta(spec));
  EXPECT_EQ(back.signal_strength, spec.signal_strength);
  EXPECT_EQ(meta_hash(synth_meta(back)), meta_hash(synth_meta(spec)));
  SynthSpec other = spec;
  other.seed += 1;
  EXPECT_NE(meta_hash(synth_meta(other)), meta_hash(synth_meta(spec)));
}

TEST(DatasetIo, RoundTripIsBitwise) {
  SynthSpec spec;
  spec.train_per_class = 6;
  spec.val_per_class = 2;
  spec.test_per_class = 2;
  const Dataset d = generate(spec);
  const fs::path dir = scratch("roundtrip");
  save_dataset(d, dir);
  EXPECT_TRUE(fs::exists(dir / "images.pift"));
  EXPECT_TRUE(fs::exists(dir / "meta.txt"));
  EXPECT_EQ(load_dataset(dir), d);

  std::ifstream labels(dir / "labels.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(labels, line)) ++lines;
  EXPECT_EQ(lines, d.size());
}

TEST(DatasetIo, TruncatedImagesAreAFormatError) {
  SynthSpec spec;
  spec.train_per_class = 2;
  spec.val_per_class = 1;
  spec.test_per_class = 1;
  const fs::path dir = scratch("truncated");
  save_dataset(generate(spec), dir);
  fs::resize_file(dir / "images.pift", fs::file_size(dir / "images.pift") - 9);
  EXPECT_THROW(load_dataset(dir), FormatError);
  fs::resize_file(dir / "images.pift", 6);
  EXPECT_THROW(load_dataset(dir), FormatError);
}

TEST(DatasetIo, LabelCountMismatch) {
  SynthSpec spec;
  spec.train_per_class = 2;
  spec.val_per_class = 1;
  spec.test_per_class = 1;
  const fs::path dir = scratch("labels");
  save_dataset(generate(spec), dir);
  std::ofstream(dir / "labels.csv", std::ios::app) << "1\n";
  EXPECT_THROW(load_dataset(dir), FormatError);
  std::ofstream(dir / "labels.csv") << "0\nx\n";
  EXPECT_THROW(load_dataset(dir), FormatError);
  EXPECT_THROW(load_dataset(dir / "missing"), IoError);
}
