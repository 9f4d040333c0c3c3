#include <atomic>

#include <vector>

#include "conv_detail.hpp"
#include "pifnet/kernels.hpp"

namespace pifnet::kernels {

namespace {
std::atomic<Exec> g_default_exec{Exec::parallel};
}

Exec default_exec() noexcept { return g_default_exec.load(std::memory_order_relaxed); }

void set_default_exec(Exec exec) noexcept { g_default_exec.store(exec, std::memory_order_relaxed); }

namespace serial {

void conv_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                  std::span<const double> bias, std::span<double> y) {
  const std::size_t in_stride = g.in_channels * g.in_volume();
  const std::size_t out_vol = g.out_volume();
  if (detail::use_narrow(g)) {
    std::vector<double> wt(w.size()), acc(g.out_channels);
    detail::weights_c_tap_o(g, w.data(), wt.data());
    for (std::size_t n = 0; n < g.batch; ++n) {
      detail::forward_item_narrow(g, x.data() + n * in_stride, wt.data(), bias.data(),
                                  y.data() + n * g.out_channels * out_vol, acc.data());
    }
    return;
  }
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      detail::forward_plane(g, x.data() + n * in_stride, w.data(), bias.data(), o,
                            y.data() + (n * g.out_channels + o) * out_vol);
    }
  }
}

void conv_backward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                   std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                   std::span<double> db) {
  const std::size_t k_vol = g.kernel_volume();
  const std::size_t in_stride = g.in_channels * g.in_volume();
  const std::size_t out_stride = g.out_channels * g.out_volume();
  if (detail::use_narrow(g)) {
    std::vector<double> dwt(k_vol * g.out_channels), dyv(g.out_channels), wt(w.size()), acc(g.in_channels);
    for (std::size_t o = 0; o < g.out_channels; ++o) db[o] = detail::bias_grad(g, dy.data(), o);
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      detail::weight_grad_narrow(g, x.data(), dy.data(), c, dwt.data(), dyv.data());
      for (std::size_t o = 0; o < g.out_channels; ++o)
        for (std::size_t t = 0; t < k_vol; ++t) dw[(o * g.in_channels + c) * k_vol + t] = dwt[t * g.out_channels + o];
    }
    detail::weights_o_tap_c(g, w.data(), wt.data());
    for (std::size_t n = 0; n < g.batch; ++n) {
      detail::input_grad_narrow(g, wt.data(), dy.data() + n * out_stride, dx.data() + n * in_stride, acc.data());
    }
    return;
  }
  std::vector<double> lanes(g.out[2]);
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    db[o] = detail::bias_grad(g, dy.data(), o);
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      detail::weight_grad(g, x.data(), dy.data(), o, c, dw.data() + (o * g.in_channels + c) * k_vol,
                          lanes.data());
    }
  }
  for (std::size_t n = 0; n < g.batch; ++n) {
    detail::input_grad(g, w.data(), dy.data() + n * out_stride, dx.data() + n * in_stride);
  }
}

}  // namespace serial

void conv_forward(Exec exec, const ConvGeometry& g, std::span<const double> x,
                  std::span<const double> w, std::span<const double> bias, std::span<double> y) {
  if (exec == Exec::parallel) {
    omp::conv_forward(g, x, w, bias, y);
  } else {
    serial::conv_forward(g, x, w, bias, y);
  }
}

void conv_backward(Exec exec, const ConvGeometry& g, std::span<const double> x,
                   std::span<const double> w, std::span<const double> dy, std::span<double> dx,
                   std::span<double> dw, std::span<double> db) {
  if (exec == Exec::parallel) {
    omp::conv_backward(g, x, w, dy, dx, dw, db);
  } else {
    serial::conv_backward(g, x, w, dy, dx, dw, db);
  }
}

}  // namespace pifnet::kernels
