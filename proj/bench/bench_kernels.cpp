#include <benchmark/benchmark.h>

#include <vector>

#include "pifnet/kernels.hpp"
#include "pifnet/experiment.hpp"
#include "pifnet/layers.hpp"
#include "pifnet/pif.hpp"
#include "pifnet/rng.hpp"

using namespace pifnet;
using kernels::ConvGeometry;
using kernels::Exec;

namespace {

// batch 32, 16 -> 16 channels, 3x3 "same" on an HxH map.
ConvGeometry geometry(std::size_t h) {
  ConvGeometry g;
  g.batch = 32;
  g.in_channels = 16;
  g.out_channels = 16;
  g.in = {1, h, h};
  g.kernel = {1, 3, 3};
  g.pad_before = {0, 1, 1};
  g.out = {1, h, h};
  return g;
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void BM_ConvForward(benchmark::State& state, Exec exec) {
  const auto g = geometry(static_cast<std::size_t>(state.range(0)));
  Rng rng(1);
  auto x = random_vec(g.batch * g.in_channels * g.in_volume(), rng);
  auto w = random_vec(g.out_channels * g.in_channels * g.kernel_volume(), rng);
  auto b = random_vec(g.out_channels, rng);
  std::vector<double> y(g.batch * g.out_channels * g.out_volume());
  for (auto _ : state) {
    kernels::conv_forward(exec, g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_ConvBackward(benchmark::State& state, Exec exec) {
  const auto g = geometry(static_cast<std::size_t>(state.range(0)));
  Rng rng(2);
  auto x = random_vec(g.batch * g.in_channels * g.in_volume(), rng);
  auto w = random_vec(g.out_channels * g.in_channels * g.kernel_volume(), rng);
  auto dy = random_vec(g.batch * g.out_channels * g.out_volume(), rng);
  std::vector<double> dx(x.size()), dw(w.size()), db(g.out_channels);
  for (auto _ : state) {
    kernels::conv_backward(exec, g, x, w, dy, dx, dw, db);
    benchmark::DoNotOptimize(dx.data());
  }
}

void BM_PifForward(benchmark::State& state, Exec exec) {
  PifConfig cfg;
  cfg.input_size = {8, 8};
  cfg.patch_size = {2, 2};
  cfg.kernel_size = {3, 3};
  cfg.pad = {2, 2};
  cfg.in_channels = 16;
  cfg.out_channels = 16;
  cfg.with_bn_relu = true;
  Rng rng(3);
  const PifParams params = pif_init(cfg, rng);
  const Tensor x = rng_uniform(rng, {32, 16, 8, 8}, -1.0, 1.0);
  for (auto _ : state) {
    auto r = pif_forward(x, cfg, params, Mode::train, exec);
    benchmark::DoNotOptimize(r.y.data());
  }
}

// One SGD step of a default model on a batch of 32.
void BM_TrainStep(benchmark::State& state, ModelKind kind) {
  const ExperimentConfig e = default_experiment();
  Rng rng(4);
  Model m = build_model(kind, model_spec_for(e, kind), rng);
  const Tensor x = rng_uniform(rng, {32, 1, 32, 32}, -1.0, 1.0);
  std::vector<int> labels(32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
  auto params = m.parameters();
  for (auto _ : state) {
    const LossResult l = softmax_cross_entropy(m.forward(x, Mode::train), labels);
    m.backward(l.dlogits);
    sgd_step(params, e.baseline_train);
  }
}

}  // namespace

BENCHMARK_CAPTURE(BM_TrainStep, baseline, ModelKind::baseline)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainStep, pif, ModelKind::pif)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_ConvForward, serial, Exec::serial)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK_CAPTURE(BM_ConvForward, omp, Exec::parallel)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK_CAPTURE(BM_ConvBackward, serial, Exec::serial)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK_CAPTURE(BM_ConvBackward, omp, Exec::parallel)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK_CAPTURE(BM_PifForward, serial, Exec::serial);
BENCHMARK_CAPTURE(BM_PifForward, omp, Exec::parallel);

BENCHMARK_MAIN();
