#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pifnet/errors.hpp"
#include "pifnet/layers.hpp"

using namespace pifnet;

namespace {
std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }
}  // namespace

TEST(BatchNorm, TrainModeNormalises) {
  Rng rng(1);
  const Tensor x = rng_uniform(rng, {4, 3, 5, 5}, -3.0, 7.0);
  const BatchNormParams p = make_batchnorm_params(3);
  const BatchNormResult r = batchnorm_forward(x, p, Mode::train);
  std::vector<double> m, v;
  oracle::channel_stats(r.y, m, v);
  std::vector<double> xm, xv;
  oracle::channel_stats(x, xm, xv);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(m[c], 0.0, 1e-9);
    EXPECT_NEAR(v[c], xv[c] / (xv[c] + 1e-5), 1e-9);
    // running = 0.9 * init + 0.1 * batch
    EXPECT_NEAR(r.running_mean[c], 0.1 * xm[c], 1e-12);
    EXPECT_NEAR(r.running_var[c], 0.9 + 0.1 * xv[c], 1e-12);
  }
  // parameters are not mutated; new running stats come back as values
  EXPECT_EQ(p.running_mean.sum(), 0.0);
}

TEST(BatchNorm, GammaZeroGivesBeta) {
  Rng rng(2);
  const Tensor x = rng_uniform(rng, {3, 2, 4}, -1.0, 1.0);
  BatchNormParams p = make_batchnorm_params(2);
  p.gamma = Tensor::create({2}, 0.0);
  p.beta = Tensor::from_data({2}, {0.25, -3.0});
  const Tensor y = batchnorm_forward(x, p, Mode::train).y;
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], p.beta[(i / 4) % 2]);
}

TEST(BatchNorm, EvalIdentityStatistics) {
  Rng rng(3);
  const Tensor x = rng_uniform(rng, {1, 2, 3, 3}, -1.0, 1.0);
  const BatchNormParams p = make_batchnorm_params(2);
  const BatchNormResult r = batchnorm_forward(x, p, Mode::eval);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(r.y[i], x[i] / std::sqrt(1.0 + 1e-5), 1e-15);
  EXPECT_EQ(r.running_mean, p.running_mean);
  EXPECT_EQ(r.running_var, p.running_var);
}

TEST(BatchNorm, DegenerateBatch) {
  const BatchNormParams p = make_batchnorm_params(1);
  EXPECT_THROW(batchnorm_forward(Tensor::create({1, 1, 4, 4}), p, Mode::train), DegenerateBatchError);
  EXPECT_NO_THROW(batchnorm_forward(Tensor::create({1, 1, 4, 4}), p, Mode::eval));
}

TEST(BatchNorm, BackwardBetaAndZero) {
  Rng rng(4);
  const Tensor x = rng_uniform(rng, {3, 2, 2, 2}, -1.0, 1.0);
  BatchNormParams p = make_batchnorm_params(2);
  const BatchNormResult r = batchnorm_forward(x, p, Mode::train);
  const Tensor dy = rng_uniform(rng, x.shape(), -1.0, 1.0);
  const BatchNormGrads g = batchnorm_backward(dy, r.cache);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t i = 0; i < 4; ++i) s += dy[(n * 2 + c) * 4 + i];
    EXPECT_NEAR(g.dbeta[c], s, 1e-12);
  }
  const BatchNormGrads z = batchnorm_backward(Tensor::zeros_like(dy), r.cache);
  EXPECT_EQ(oracle::max_abs(z.dx) + oracle::max_abs(z.dgamma) + oracle::max_abs(z.dbeta), 0.0);
}

TEST(Relu, ForwardBackward) {
  const Tensor x = Tensor::from_data({3}, {-1.0, 0.0, 2.0});
  EXPECT_EQ(values(relu_forward(x).y), (std::vector<double>{0, 0, 2}));
  const Tensor dx = relu_backward(Tensor::create({3}, 1.0), x);
  EXPECT_EQ(values(dx), (std::vector<double>{0, 0, 1}));
  Rng rng(1);
  const Tensor pos = rng_uniform(rng, {10}, 0.0, 1.0);
  EXPECT_EQ(relu_forward(pos).y, pos);
}

TEST(GlobalAvgPool, Values) {
  EXPECT_EQ(global_avg_pool(Tensor::create({2, 3, 4, 4}, 2.5)), Tensor::create({2, 3}, 2.5));
  const Tensor x = Tensor::from_data({1, 1, 2, 2}, {0, 2, 4, 6});
  EXPECT_EQ(global_avg_pool(x)[0], 3.0);
  const Tensor dx = global_avg_pool_backward(Tensor::create({1, 1}, 2.0), x.shape());
  EXPECT_EQ(values(dx), std::vector<double>(4, 0.5));
}

TEST(Linear, IdentityAndBias) {
  Rng rng(5);
  const Tensor x = rng_uniform(rng, {4, 3}, -1.0, 1.0);
  LinearParams p{Tensor::create({3, 3}), Tensor::create({3})};
  for (std::size_t i = 0; i < 3; ++i) p.weights.at({i, i}) = 1.0;
  EXPECT_EQ(linear_forward(x, p), x);
  p.bias = Tensor::from_data({3}, {1, 2, 3});
  const Tensor y = linear_forward(Tensor::create({2, 3}), p);
  EXPECT_EQ(values(y), (std::vector<double>{1, 2, 3, 1, 2, 3}));
  EXPECT_THROW(linear_forward(Tensor::create({2, 4}), p), ShapeError);
}

TEST(SoftmaxCrossEntropy, Values) {
  const std::vector<int> labels{0, 1};
  const LossResult u = softmax_cross_entropy(Tensor::create({2, 2}, 0.0), labels);
  EXPECT_NEAR(u.loss, std::log(2.0), 1e-15);

  const LossResult big = softmax_cross_entropy(Tensor::from_data({1, 3}, {1000.0, 0.0, -5.0}), std::vector<int>{0});
  EXPECT_TRUE(std::isfinite(big.loss));
  EXPECT_NEAR(big.loss, 0.0, 1e-12);

  Rng rng(6);
  const Tensor logits = rng_uniform(rng, {5, 4}, -3.0, 3.0);
  const std::vector<int> lab{0, 3, 2, 1, 3};
  const LossResult r = softmax_cross_entropy(logits, lab);
  for (std::size_t n = 0; n < 5; ++n) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += r.dlogits.at({n, k});
    EXPECT_NEAR(s, 0.0, 1e-15);
  }
  Tensor shifted = logits;
  for (std::size_t k = 0; k < 4; ++k) shifted.at({2, k}) += 17.25;
  EXPECT_NEAR(softmax_cross_entropy(shifted, lab).loss, r.loss, 1e-12);

  EXPECT_THROW(softmax_cross_entropy(logits, std::vector<int>{0, 4, 0, 0, 0}), LabelError);
  EXPECT_THROW(softmax_cross_entropy(logits, std::vector<int>{0, -1, 0, 0, 0}), LabelError);
}

TEST(HeInit, BoundsAndMoments) {
  Rng a(9), b(9);
  const Shape s{8, 4, 3, 3};
  const double bound = std::sqrt(6.0 / 36.0);
  EXPECT_DOUBLE_EQ(he_bound(s), bound);
  const Tensor w = he_init(a, s);
  EXPECT_EQ(w, he_init(b, s));
  for (double v : w.data()) {
    EXPECT_GE(v, -bound);
    EXPECT_LE(v, bound);
  }
  EXPECT_DOUBLE_EQ(he_bound({10, 3}), std::sqrt(6.0 / 10.0));

  Rng c(10);
  const Shape big{100000, 1, 1, 1};
  const Tensor m = he_init(c, big);
  double s2 = 0.0;
  for (double v : m.data()) s2 += v * v;
  const double b1 = he_bound(big);
  EXPECT_NEAR(s2 / 1e5, b1 * b1 / 3.0, 0.05 * b1 * b1 / 3.0);
}
