#include <gtest/gtest.h>

#include <set>

#include "pifnet/gradcheck.hpp"

using namespace pifnet;

TEST(Gradcheck, RelativeErrorDefinition) {
  EXPECT_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(-2.0, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-3);  // floor of 1e-6
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
}

TEST(Gradcheck, ChecksAQuadratic) {
  Tensor x = Tensor::from_data({3}, {0.5, -1.0, 2.0});
  Tensor g = Tensor::from_data({3}, {1.0, -2.0, 4.0});  // d/dx of sum(x^2)
  const auto loss = [&] {
    double s = 0.0;
    for (double v : x.data()) s += v * v;
    return s;
  };
  GradcheckOptions opt;
  const ComponentResult ok = check_gradients("square", {{"x", &x, g}}, loss, opt);
  EXPECT_TRUE(ok.passed);
  EXPECT_EQ(ok.checked, 3u);
  EXPECT_LT(ok.max_rel_error, 1e-8);
  EXPECT_EQ(x, Tensor::from_data({3}, {0.5, -1.0, 2.0}));  // restored after probing

  Tensor wrong = Tensor::from_data({3}, {1.0, -2.0, 4.1});
  const ComponentResult bad = check_gradients("square", {{"x", &x, wrong}}, loss, opt);
  EXPECT_FALSE(bad.passed);
  EXPECT_EQ(bad.worst_location, "x[2]");
  EXPECT_DOUBLE_EQ(bad.analytic, 4.1);
  EXPECT_NEAR(bad.numeric, 4.0, 1e-8);
}

TEST(Gradcheck, SuiteCoversEveryLayerAndPasses) {
  for (std::uint64_t seed : {2024ULL, 1ULL, 77ULL}) {
    GradcheckOptions opt;
    opt.seed = seed;
    const GradcheckReport rep = run_gradcheck(opt);
    std::set<std::string> names;
    for (const auto& c : rep.components) {
      names.insert(c.component);
      EXPECT_TRUE(c.passed) << c.component << " seed " << seed << ": " << c.max_rel_error << " at "
                            << c.worst_location;
      EXPECT_LE(c.max_rel_error, 1e-4);
      EXPECT_GT(c.checked, 0u);
    }
    for (const char* want : {"conv2d", "conv3d", "batchnorm_train", "batchnorm_eval", "relu", "linear",
                             "global_avg_pool", "softmax_cross_entropy", "pif2d", "pif2d_local", "pif2d_bn_relu",
                             "pif3d", "model_baseline", "model_pif"}) {
      EXPECT_TRUE(names.count(want)) << want;
    }
    EXPECT_TRUE(rep.all_passed());
    EXPECT_LT(rep.seconds, 60.0);
  }
}

TEST(Gradcheck, CorruptedConvBackwardIsCaught) {
  GradcheckOptions opt;
  opt.corrupt_conv_backward = true;
  const GradcheckReport rep = run_gradcheck(opt);
  EXPECT_FALSE(rep.all_passed());
  bool conv2d_failed = false;
  for (const auto& c : rep.components) {
    if (c.component == "conv2d") {
      conv2d_failed = !c.passed;
      EXPECT_FALSE(c.worst_location.empty());
      EXPECT_NEAR(c.analytic, -c.numeric, 1e-6 * std::abs(c.numeric) + 1e-9);
    }
    if (c.component == "relu" || c.component == "linear") EXPECT_TRUE(c.passed);
  }
  EXPECT_TRUE(conv2d_failed);
}
