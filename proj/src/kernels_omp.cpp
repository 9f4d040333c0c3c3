#include <vector>

#include "conv_detail.hpp"
#include "pifnet/kernels.hpp"

namespace pifnet::kernels::omp {

void conv_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                  std::span<const double> bias, std::span<double> y) {
  const std::size_t in_stride = g.in_channels * g.in_volume();
  const std::size_t out_vol = g.out_volume();
  if (detail::use_narrow(g)) {
    std::vector<double> wt(w.size());
    detail::weights_c_tap_o(g, w.data(), wt.data());
#pragma omp parallel if (g.batch > 1)
    {
      std::vector<double> acc(g.out_channels);
#pragma omp for schedule(static)
      for (long n = 0; n < static_cast<long>(g.batch); ++n) {
        detail::forward_item_narrow(g, x.data() + n * in_stride, wt.data(), bias.data(),
                                    y.data() + n * g.out_channels * out_vol, acc.data());
      }
    }
    return;
  }
  const long total = static_cast<long>(g.batch * g.out_channels);
#pragma omp parallel for schedule(static) if (total > 1)
  for (long i = 0; i < total; ++i) {
    const std::size_t n = static_cast<std::size_t>(i) / g.out_channels;
    const std::size_t o = static_cast<std::size_t>(i) % g.out_channels;
    detail::forward_plane(g, x.data() + n * in_stride, w.data(), bias.data(), o,
                          y.data() + static_cast<std::size_t>(i) * out_vol);
  }
}

void conv_backward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                   std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                   std::span<double> db) {
  const std::size_t k_vol = g.kernel_volume();
  const long pairs = static_cast<long>(g.out_channels * g.in_channels);
  const std::size_t in_stride = g.in_channels * g.in_volume();
  const std::size_t out_stride = g.out_channels * g.out_volume();
  if (detail::use_narrow(g)) {
    std::vector<double> wt(w.size());
    detail::weights_o_tap_c(g, w.data(), wt.data());
#pragma omp parallel
    {
      std::vector<double> dwt(k_vol * g.out_channels), dyv(g.out_channels), acc(g.in_channels);
#pragma omp for schedule(static) nowait
      for (long o = 0; o < static_cast<long>(g.out_channels); ++o) {
        db[o] = detail::bias_grad(g, dy.data(), static_cast<std::size_t>(o));
      }
#pragma omp for schedule(static) nowait
      for (long c = 0; c < static_cast<long>(g.in_channels); ++c) {
        detail::weight_grad_narrow(g, x.data(), dy.data(), static_cast<std::size_t>(c), dwt.data(), dyv.data());
        for (std::size_t o = 0; o < g.out_channels; ++o)
          for (std::size_t t = 0; t < k_vol; ++t) dw[(o * g.in_channels + c) * k_vol + t] = dwt[t * g.out_channels + o];
      }
#pragma omp for schedule(static)
      for (long n = 0; n < static_cast<long>(g.batch); ++n) {
        detail::input_grad_narrow(g, wt.data(), dy.data() + n * out_stride, dx.data() + n * in_stride, acc.data());
      }
    }
    return;
  }
#pragma omp parallel
  {
    std::vector<double> lanes(g.out[2]);
#pragma omp for schedule(static) nowait
    for (long o = 0; o < static_cast<long>(g.out_channels); ++o) {
      db[o] = detail::bias_grad(g, dy.data(), static_cast<std::size_t>(o));
    }
#pragma omp for schedule(static) nowait
    for (long i = 0; i < pairs; ++i) {
      const std::size_t o = static_cast<std::size_t>(i) / g.in_channels;
      const std::size_t c = static_cast<std::size_t>(i) % g.in_channels;
      detail::weight_grad(g, x.data(), dy.data(), o, c, dw.data() + static_cast<std::size_t>(i) * k_vol,
                          lanes.data());
    }
#pragma omp for schedule(static)
    for (long n = 0; n < static_cast<long>(g.batch); ++n) {
      detail::input_grad(g, w.data(), dy.data() + n * out_stride, dx.data() + n * in_stride);
    }
  }
}

}  // namespace pifnet::kernels::omp
