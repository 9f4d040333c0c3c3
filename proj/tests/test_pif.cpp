#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pifnet/errors.hpp"
#include "pifnet/pif.hpp"

using namespace pifnet;
using kernels::Exec;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor iota_tensor(Shape shape) {
  std::vector<double> v(shape_size(shape));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  return Tensor::from_data(std::move(shape), std::move(v));
}

PifConfig cfg2d(std::size_t in, std::size_t s, std::size_t k, std::size_t p, std::size_t cin, std::size_t cout,
                bool bn = false) {
  PifConfig c;
  c.input_size = {in, in};
  c.patch_size = {s, s};
  c.kernel_size = {k, k};
  c.pad = {p, p};
  c.in_channels = cin;
  c.out_channels = cout;
  c.with_bn_relu = bn;
  return c;
}

// Random weights and biases in every patch.
PifParams random_params(const PifConfig& cfg, Rng& rng) {
  PifParams p = pif_init(cfg, rng);
  for (auto& patch : p.per_patch)
    for (auto& b : patch) b.conv.bias = rng_uniform(rng, b.conv.bias.shape(), -1.0, 1.0);
  return p;
}

// Patch block (i, j) of a 2D map with block extent e.
bool inside(std::size_t h, std::size_t w, std::size_t i, std::size_t j, std::size_t e) {
  return h / e == i && w / e == j;
}

}  // namespace

TEST(Split, SixteenPatches) {
  Rng rng(1);
  const Tensor x = rng_uniform(rng, {1, 5, 8, 8}, -1.0, 1.0);
  const std::vector<std::size_t> s{2, 2};
  const PatchGrid g = split(x, s);
  EXPECT_EQ(g.patches.size(), 16u);
  EXPECT_EQ(g.grid_dims, (std::vector<std::size_t>{4, 4}));
  for (const auto& p : g.patches) EXPECT_EQ(p.shape(), (Shape{1, 5, 2, 2}));
}

TEST(Split, HandEnumerated) {
  const Tensor x = iota_tensor({1, 1, 4, 4});
  const std::vector<std::size_t> s{2, 2};
  const PatchGrid g = split(x, s);
  ASSERT_EQ(g.patches.size(), 4u);
  EXPECT_EQ(values(g.patches[0]), (std::vector<double>{0, 1, 4, 5}));
  EXPECT_EQ(values(g.patches[1]), (std::vector<double>{2, 3, 6, 7}));
  EXPECT_EQ(values(g.patches[2]), (std::vector<double>{8, 9, 12, 13}));
  EXPECT_EQ(values(g.patches[3]), (std::vector<double>{10, 11, 14, 15}));
}

TEST(Split, WholeMapIsOnePatch) {
  const Tensor x = iota_tensor({2, 3, 4, 6});
  const std::vector<std::size_t> s{4, 6};
  const PatchGrid g = split(x, s);
  ASSERT_EQ(g.patches.size(), 1u);
  EXPECT_EQ(g.patches[0], x);
}

TEST(Split, NonDivisibleIsAnError) {
  const std::vector<std::size_t> s{3, 2};
  try {
    split(Tensor::create({1, 1, 8, 8}), s);
    FAIL();
  } catch (const PatchTilingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('8'), std::string::npos);
    EXPECT_NE(msg.find('3'), std::string::npos);
  }
}

TEST(Split, RoundTripProperty) {
  Rng rng(3);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t dims = 2 + rng.below(2);
    Shape shape{1 + rng.below(3), 1 + rng.below(3)};
    std::vector<std::size_t> s(dims);
    for (std::size_t a = 0; a < dims; ++a) {
      s[a] = 1 + rng.below(3);
      shape.push_back(s[a] * (1 + rng.below(4)));
    }
    const Tensor x = rng_uniform(rng, shape, -1.0, 1.0);
    const PatchGrid g = split(x, s);
    std::size_t cells = 1;
    for (auto v : g.grid_dims) cells *= v;
    ASSERT_EQ(g.patches.size(), cells);
    ASSERT_EQ(reassemble(g), x);
  }
}

TEST(Reassemble, ConstantAndErrors) {
  PatchGrid g;
  g.grid_dims = {2, 3};
  for (int i = 0; i < 6; ++i) g.patches.push_back(Tensor::create({1, 2, 2, 2}, 4.0));
  EXPECT_EQ(reassemble(g), Tensor::create({1, 2, 4, 6}, 4.0));

  PatchGrid bad = g;
  bad.patches[3] = Tensor::create({1, 2, 2, 3}, 4.0);
  EXPECT_THROW(reassemble(bad), GridConsistencyError);
  PatchGrid count = g;
  count.patches.pop_back();
  EXPECT_THROW(reassemble(count), GridConsistencyError);
}

TEST(Pif, IdentityKernels) {
  const PifConfig cfg = cfg2d(6, 2, 1, 0, 3, 3);
  PifParams p = make_pif_params(cfg);
  for (auto& patch : p.per_patch) {
    for (std::size_t c = 0; c < 3; ++c) patch[0].conv.weights.at({c, c, 0, 0}) = 1.0;
  }
  Rng rng(4);
  const Tensor x = rng_uniform(rng, {2, 3, 6, 6}, -1.0, 1.0);
  EXPECT_EQ(pif_forward(x, cfg, p).y, x);
}

TEST(Pif, SharedParamsEqualPerPatchOracle) {
  Rng rng(5);
  const PifConfig cfg = cfg2d(8, 4, 2, 0, 2, 3);
  PifParams p = random_params(cfg, rng);
  for (auto& patch : p.per_patch) patch = p.per_patch[0];
  const Tensor x = rng_uniform(rng, {2, 2, 8, 8}, -1.0, 1.0);
  const Tensor y = pif_forward(x, cfg, p).y;
  const auto& c0 = p.per_patch[0][0].conv;
  ASSERT_EQ(y.shape(), (Shape{2, 3, 6, 6}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      const std::vector<std::size_t> off{0, 0, 4 * i, 4 * j}, sz{2, 2, 4, 4};
      const Tensor expect = oracle::conv(slice_region(x, off, sz), c0.weights, c0.bias, {1, 1}, {0, 0}, {0, 0});
      const std::vector<std::size_t> yoff{0, 0, 3 * i, 3 * j}, ysz{2, 3, 3, 3};
      EXPECT_EQ(slice_region(y, yoff, ysz), expect);
    }
}

TEST(Pif, LocallyConnectedSpecialCase) {
  Rng rng(6);
  for (std::size_t p : {0u, 1u, 2u}) {
    const std::size_t s = 2, k = s + p;
    const PifConfig cfg = cfg2d(8, s, k, p, 3, 2);
    const PifParams params = random_params(cfg, rng);
    const Tensor x = rng_uniform(rng, {2, 3, 8, 8}, -1.0, 1.0);
    const Tensor y = pif_forward(x, cfg, params).y;
    EXPECT_EQ(pif_patch_output_size(cfg), (std::vector<std::size_t>{1, 1}));
    ASSERT_EQ(y.shape(), (Shape{2, 2, 4, 4}));
    std::vector<Tensor> w, b;
    for (const auto& patch : params.per_patch) {
      w.push_back(patch[0].conv.weights);
      b.push_back(patch[0].conv.bias);
    }
    const Tensor expect = oracle::locally_connected_2d(x, w, b, static_cast<long>(s), static_cast<long>(p));
    EXPECT_LE(max_abs_diff(y, expect), 1e-12) << "p=" << p;
  }
}

TEST(Pif, SingleCellEqualsSharedConvolution) {
  Rng rng(7);
  const PifConfig cfg = cfg2d(6, 6, 3, 0, 2, 4);
  const PifParams p = random_params(cfg, rng);
  const Tensor x = rng_uniform(rng, {3, 2, 6, 6}, -1.0, 1.0);
  const auto& c = p.per_patch[0][0].conv;
  const Tensor expect = oracle::conv(x, c.weights, c.bias, {1, 1}, {0, 0}, {0, 0});
  EXPECT_LE(max_abs_diff(pif_forward(x, cfg, p).y, expect), 1e-12);
  EXPECT_EQ(pif_param_count(cfg), c.param_count());
}

TEST(Pif, PaddingSplitsFloorBeforeCeilAfter) {
  // p = 1 pads only after: with a 2x2 kernel on a 2x2 patch the top-left
  // output reads rows 0-1 and columns 0-1 of the patch itself
  Rng rng(8);
  const PifConfig cfg = cfg2d(2, 2, 2, 1, 1, 1);
  const PifParams p = random_params(cfg, rng);
  const Tensor x = rng_uniform(rng, {1, 1, 2, 2}, -1.0, 1.0);
  const auto& c = p.per_patch[0][0].conv;
  const Tensor expect = oracle::conv(x, c.weights, c.bias, {1, 1}, {0, 0}, {1, 1});
  EXPECT_EQ(pif_forward(x, cfg, p).y, expect);
}

TEST(Pif, ForwardLocality) {
  Rng rng(9);
  for (bool bn : {false, true}) {
    const PifConfig cfg = cfg2d(8, 2, 3, 2, 2, 3, bn);
    const PifParams p = random_params(cfg, rng);
    const Tensor x = rng_uniform(rng, {2, 2, 8, 8}, -1.0, 1.0);
    const Tensor y = pif_forward(x, cfg, p, Mode::eval).y;
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t i = rng.below(4), j = rng.below(4);
      Tensor xp = x;
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t h = 2 * i; h < 2 * i + 2; ++h)
            for (std::size_t w = 2 * j; w < 2 * j + 2; ++w) xp.at({n, c, h, w}) += rng.uniform(-1.0, 1.0);
      const Tensor yp = pif_forward(xp, cfg, p, Mode::eval).y;
      const std::size_t e = pif_patch_output_size(cfg)[0];
      bool changed_inside = false;
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t o = 0; o < 3; ++o)
          for (std::size_t h = 0; h < y.dim(2); ++h)
            for (std::size_t w = 0; w < y.dim(3); ++w) {
              const double d = yp.at({n, o, h, w}) - y.at({n, o, h, w});
              if (inside(h, w, i, j, e)) {
                changed_inside = changed_inside || d != 0.0;
              } else {
                ASSERT_EQ(d, 0.0);
              }
            }
      EXPECT_TRUE(changed_inside);
    }
  }
}

TEST(Pif, BackwardLocality) {
  Rng rng(10);
  for (bool bn : {false, true}) {
    const PifConfig cfg = cfg2d(6, 2, 2, 1, 2, 2, bn);
    const PifParams p = random_params(cfg, rng);
    const Tensor x = rng_uniform(rng, {3, 2, 6, 6}, -1.0, 1.0);
    const PifResult r = pif_forward(x, cfg, p);
    const std::size_t e = pif_patch_output_size(cfg)[0];
    const std::size_t i = 1, j = 2, target = i * 3 + j;
    Tensor dy = Tensor::zeros_like(r.y);
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t h = 0; h < r.y.dim(2); ++h)
          for (std::size_t w = 0; w < r.y.dim(3); ++w)
            if (inside(h, w, i, j, e)) dy.at({n, o, h, w}) = rng.uniform(-1.0, 1.0);
    const PifGrads g = pif_backward(dy, r.cache);
    for (std::size_t q = 0; q < g.per_patch.size(); ++q) {
      const auto& pg = g.per_patch[q][0];
      const double m = oracle::max_abs(pg.dw) + oracle::max_abs(pg.db) +
                       (bn ? oracle::max_abs(pg.dgamma) + oracle::max_abs(pg.dbeta) : 0.0);
      if (q == target) {
        EXPECT_GT(m, 0.0);
      } else {
        EXPECT_EQ(m, 0.0) << "patch " << q;
      }
    }
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t h = 0; h < 6; ++h)
          for (std::size_t w = 0; w < 6; ++w)
            if (!inside(h, w, i, j, 2)) ASSERT_EQ(g.dx.at({n, c, h, w}), 0.0);

    const PifGrads z = pif_backward(Tensor::zeros_like(r.y), r.cache);
    EXPECT_EQ(oracle::max_abs(z.dx), 0.0);
    for (const auto& patch : z.per_patch) EXPECT_EQ(oracle::max_abs(patch[0].dw) + oracle::max_abs(patch[0].db), 0.0);
  }
}

TEST(Pif, ParamCount) {
  EXPECT_EQ(pif_param_count(cfg2d(8, 2, 3, 2, 5, 8)), 5888u);
  EXPECT_EQ(pif_param_count(cfg2d(8, 2, 3, 2, 5, 8, true)), 5888u + 16u * 2u * 8u);
  const std::size_t one = pif_param_count(cfg2d(8, 4, 3, 2, 5, 8));
  EXPECT_EQ(pif_param_count(cfg2d(8, 2, 3, 2, 5, 8)), 4 * one);
  PifConfig two = cfg2d(8, 2, 3, 2, 5, 8);
  two.blocks = 2;
  EXPECT_EQ(pif_param_count(two), 5888u + 16u * (8u * 8u * 9u + 8u));
  Rng rng(1);
  const PifParams p = pif_init(cfg2d(8, 2, 3, 2, 5, 8), rng);
  std::size_t counted = 0;
  for (const auto& patch : p.per_patch) counted += patch[0].conv.param_count();
  EXPECT_EQ(counted, 5888u);
}

TEST(Pif, ConfigValidation) {
  EXPECT_THROW(validate(cfg2d(8, 2, 4, 1, 1, 1)), InvalidArgumentError);
  EXPECT_THROW(validate(cfg2d(9, 2, 3, 1, 1, 1)), PatchTilingError);
  PifConfig c = cfg2d(8, 2, 2, 0, 1, 1);
  c.kernel_size = {2};
  EXPECT_THROW(validate(c), InvalidArgumentError);
}

TEST(Pif, GridMismatchIsAnError) {
  Rng rng(11);
  const PifConfig cfg = cfg2d(8, 2, 2, 1, 1, 1);
  PifParams p = pif_init(cfg, rng);
  p.per_patch.pop_back();
  EXPECT_THROW(pif_forward(Tensor::create({1, 1, 8, 8}), cfg, p), GridConsistencyError);
  const PifParams ok = pif_init(cfg, rng);
  EXPECT_THROW(pif_forward(Tensor::create({1, 2, 8, 8}), cfg, ok), ShapeError);
  const PifResult r = pif_forward(Tensor::create({1, 1, 8, 8}), cfg, ok);
  EXPECT_THROW(pif_backward(Tensor::create({1, 1, 4, 4}), r.cache), ShapeError);
}

TEST(Pif, NoWeightSharing) {
  Rng rng(12);
  const PifConfig cfg = cfg2d(4, 2, 2, 0, 1, 1);
  PifParams p = pif_init(cfg, rng);
  const PifParams before = p;
  p.per_patch[1][0].conv.weights[0] += 1.0;
  for (std::size_t q = 0; q < p.per_patch.size(); ++q) {
    if (q == 1) continue;
    EXPECT_EQ(p.per_patch[q][0].conv.weights, before.per_patch[q][0].conv.weights);
  }
  for (std::size_t a = 0; a < p.per_patch.size(); ++a)
    for (std::size_t b = a + 1; b < p.per_patch.size(); ++b)
      EXPECT_NE(p.per_patch[a][0].conv.weights.data().data(), p.per_patch[b][0].conv.weights.data().data());
}

TEST(Pif, NotTranslationEquivariant) {
  // a shared convolution commutes with a shift by one patch; a PIF layer with
  // different per-patch weights does not
  const PifConfig cfg = cfg2d(4, 2, 2, 0, 1, 1);
  PifParams p = make_pif_params(cfg);
  for (std::size_t q = 0; q < 4; ++q) p.per_patch[q][0].conv.weights = Tensor::create({1, 1, 2, 2}, 1.0 + q);
  Tensor x = Tensor::create({1, 1, 4, 4});
  x.at({0, 0, 0, 0}) = 1.0;
  Tensor shifted = Tensor::create({1, 1, 4, 4});
  shifted.at({0, 0, 0, 2}) = 1.0;

  const auto& c0 = p.per_patch[0][0].conv;
  const Tensor cy = oracle::conv(x, c0.weights, c0.bias, {2, 2}, {0, 0}, {0, 0});
  const Tensor cys = oracle::conv(shifted, c0.weights, c0.bias, {2, 2}, {0, 0}, {0, 0});
  EXPECT_EQ(cy.at({0, 0, 0, 0}), cys.at({0, 0, 0, 1}));

  const Tensor y = pif_forward(x, cfg, p).y;
  const Tensor ys = pif_forward(shifted, cfg, p).y;
  EXPECT_NE(y.at({0, 0, 0, 0}), ys.at({0, 0, 0, 1}));
}

TEST(Pif, ThreeDimensional) {
  Rng rng(13);
  PifConfig cfg;
  cfg.input_size = {4, 4, 6};
  cfg.patch_size = {2, 2, 3};
  cfg.kernel_size = {2, 2, 3};
  cfg.pad = {0, 0, 0};
  cfg.in_channels = 2;
  cfg.out_channels = 3;
  const PifParams p = random_params(cfg, rng);
  EXPECT_EQ(p.per_patch.size(), 8u);
  const Tensor x = rng_uniform(rng, {2, 2, 4, 4, 6}, -1.0, 1.0);
  const Tensor y = pif_forward(x, cfg, p).y;
  ASSERT_EQ(y.shape(), (Shape{2, 3, 2, 2, 2}));
  EXPECT_EQ(patch_label(p.grid_dims, 7), "1_1_1");
  // cell (1, 0, 1) against the shared-conv oracle on its block
  const std::size_t q = (1 * 2 + 0) * 2 + 1;
  const auto& c = p.per_patch[q][0].conv;
  const std::vector<std::size_t> off{0, 0, 2, 0, 3}, sz{2, 2, 2, 2, 3};
  const Tensor expect = oracle::conv(slice_region(x, off, sz), c.weights, c.bias, {1, 1, 1}, {0, 0, 0}, {0, 0, 0});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 3; ++o) EXPECT_EQ(y.at({n, o, 1, 0, 1}), expect.at({n, o, 0, 0, 0}));
}

TEST(Pif, SerialAndParallelAreBitwiseEqual) {
  Rng rng(14);
  for (bool bn : {false, true}) {
    PifConfig cfg = cfg2d(8, 2, 3, 2, 3, 4, bn);
    cfg.blocks = 2;
    const PifParams p = random_params(cfg, rng);
    const Tensor x = rng_uniform(rng, {4, 3, 8, 8}, -1.0, 1.0);
    const PifResult a = pif_forward(x, cfg, p, Mode::train, Exec::serial);
    const PifResult b = pif_forward(x, cfg, p, Mode::train, Exec::parallel);
    ASSERT_EQ(a.y, b.y);
    const Tensor dy = rng_uniform(rng, a.y.shape(), -1.0, 1.0);
    const PifGrads ga = pif_backward(dy, a.cache, Exec::serial);
    const PifGrads gb = pif_backward(dy, b.cache, Exec::parallel);
    ASSERT_EQ(ga.dx, gb.dx);
    for (std::size_t q = 0; q < ga.per_patch.size(); ++q)
      for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_EQ(ga.per_patch[q][k].dw, gb.per_patch[q][k].dw);
        EXPECT_EQ(ga.per_patch[q][k].db, gb.per_patch[q][k].db);
      }
  }
}

TEST(Pif, PerPatchBatchNormStatistics) {
  // each patch normalises with its own batch statistics
  Rng rng(15);
  const PifConfig cfg = cfg2d(4, 2, 1, 0, 1, 1, true);
  PifParams p = make_pif_params(cfg);
  for (auto& patch : p.per_patch) {
    patch[0].conv.weights = Tensor::create({1, 1, 1, 1}, 1.0);
    patch[0].bn->gamma = Tensor::create({1}, 1.0);
  }
  Tensor x = rng_uniform(rng, {3, 1, 4, 4}, -1.0, 1.0);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t w = 0; w < 2; ++w) x.at({n, 0, h, w}) += 10.0;
  const PifResult r = pif_forward(x, cfg, p);
  EXPECT_NEAR(r.running[0][0].mean[0], 0.1 * (10.0 + 0.0), 0.2);
  EXPECT_LT(std::abs(r.running[3][0].mean[0]), 0.1);
  EXPECT_LT(r.y.at({0, 0, 0, 0}), 3.0);
}
