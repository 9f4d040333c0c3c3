#pragma once

// Per-plane convolution bodies shared by the serial and OpenMP kernels.
// Output elements accumulate bias first, then (channel, kd, kh, kw) in
// ascending order; out-of-range taps are skipped, which equals adding w * 0.

#include <algorithm>
#include <cstddef>

#include "pifnet/kernels.hpp"

namespace pifnet::kernels::detail {

inline constexpr std::size_t kNarrowWidth = 8;

struct Range {
  std::size_t lo;
  std::size_t hi;
};

// Output positions o with 0 <= o * stride + k - pad < in.
inline Range valid_outputs(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                           std::size_t out) {
  const long s = static_cast<long>(stride);
  const long shift = static_cast<long>(k) - static_cast<long>(pad);
  const long lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  const long t = static_cast<long>(in) - shift;
  long hi = t <= 0 ? 0 : (t + s - 1) / s;
  hi = std::min<long>(hi, static_cast<long>(out));
  if (hi < lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

inline std::size_t input_pos(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad) {
  return o * stride + k - pad;
}

// y[j] += w * x[j * stride] for j in [0, n)
inline void axpy_row(double* __restrict y, const double* __restrict x, double w, std::size_t n,
                     std::size_t stride) {
  if (stride == 1) {
    for (std::size_t j = 0; j < n; ++j) y[j] += w * x[j];
  } else {
    for (std::size_t j = 0; j < n; ++j) y[j] += w * x[j * stride];
  }
}

// x[j * stride] += w * y[j]
inline void scatter_row(double* __restrict x, const double* __restrict y, double w, std::size_t n,
                        std::size_t stride) {
  if (stride == 1) {
    for (std::size_t j = 0; j < n; ++j) x[j] += w * y[j];
  } else {
    for (std::size_t j = 0; j < n; ++j) x[j * stride] += w * y[j];
  }
}

// acc[j] += a[j] * b[j * stride]
inline void fma_row(double* __restrict acc, const double* __restrict a, const double* __restrict b,
                    std::size_t n, std::size_t stride) {
  if (stride == 1) {
    for (std::size_t j = 0; j < n; ++j) acc[j] += a[j] * b[j];
  } else {
    for (std::size_t j = 0; j < n; ++j) acc[j] += a[j] * b[j * stride];
  }
}

// y plane for (n, o).
inline void forward_plane(const ConvGeometry& g, const double* x_n, const double* w,
                          const double* bias, std::size_t o, double* y_no) {
  const std::size_t out_vol = g.out_volume();
  const std::size_t in_vol = g.in_volume();
  const std::size_t k_vol = g.kernel_volume();
  std::fill(y_no, y_no + out_vol, bias[o]);
  const auto [iD, iH, iW] = g.in;
  const auto [oD, oH, oW] = g.out;
  const std::size_t sw = g.stride[2];
  const std::size_t pw = g.pad_before[2];
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* xc = x_n + c * in_vol;
    const double* wk = w + (o * g.in_channels + c) * k_vol;
    for (std::size_t kd = 0; kd < g.kernel[0]; ++kd) {
      const Range rd = valid_outputs(iD, kd, g.stride[0], g.pad_before[0], oD);
      for (std::size_t kh = 0; kh < g.kernel[1]; ++kh) {
        const Range rh = valid_outputs(iH, kh, g.stride[1], g.pad_before[1], oH);
        for (std::size_t kw = 0; kw < g.kernel[2]; ++kw) {
          const Range rw = valid_outputs(iW, kw, sw, g.pad_before[2], oW);
          const double wv = wk[(kd * g.kernel[1] + kh) * g.kernel[2] + kw];
          for (std::size_t od = rd.lo; od < rd.hi; ++od) {
            const std::size_t id = input_pos(od, kd, g.stride[0], g.pad_before[0]);
            for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
              const std::size_t ih = input_pos(oh, kh, g.stride[1], g.pad_before[1]);
              double* yrow = y_no + (od * oH + oh) * oW;
              const double* xrow = xc + (id * iH + ih) * iW;
              axpy_row(yrow + rw.lo, xrow + (rw.lo * sw + kw - pw), wv, rw.hi - rw.lo, sw);
            }
          }
        }
      }
    }
  }
}

// dw[o, c, :]. Each tap accumulates per output column over (n, od, oh),
// then the columns are summed left to right. `lanes` holds out[2] doubles.
inline void weight_grad(const ConvGeometry& g, const double* x, const double* dy, std::size_t o,
                        std::size_t c, double* dw_oc, double* lanes) {
  const std::size_t in_vol = g.in_volume();
  const std::size_t out_vol = g.out_volume();
  const auto [iD, iH, iW] = g.in;
  const auto [oD, oH, oW] = g.out;
  const std::size_t sw = g.stride[2];
  const std::size_t pw = g.pad_before[2];
  for (std::size_t kd = 0; kd < g.kernel[0]; ++kd) {
    const Range rd = valid_outputs(iD, kd, g.stride[0], g.pad_before[0], oD);
    for (std::size_t kh = 0; kh < g.kernel[1]; ++kh) {
      const Range rh = valid_outputs(iH, kh, g.stride[1], g.pad_before[1], oH);
      for (std::size_t kw = 0; kw < g.kernel[2]; ++kw) {
        const Range rw = valid_outputs(iW, kw, sw, g.pad_before[2], oW);
        const std::size_t len = rw.hi - rw.lo;
        std::fill(lanes, lanes + len, 0.0);
        for (std::size_t n = 0; n < g.batch; ++n) {
          const double* xc = x + (n * g.in_channels + c) * in_vol;
          const double* dyo = dy + (n * g.out_channels + o) * out_vol;
          for (std::size_t od = rd.lo; od < rd.hi; ++od) {
            const std::size_t id = input_pos(od, kd, g.stride[0], g.pad_before[0]);
            for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
              const std::size_t ih = input_pos(oh, kh, g.stride[1], g.pad_before[1]);
              const double* dyrow = dyo + (od * oH + oh) * oW;
              const double* xrow = xc + (id * iH + ih) * iW;
              fma_row(lanes, dyrow + rw.lo, xrow + (rw.lo * sw + kw - pw), len, sw);
            }
          }
        }
        double acc = 0.0;
        for (std::size_t j = 0; j < len; ++j) acc += lanes[j];
        dw_oc[(kd * g.kernel[1] + kh) * g.kernel[2] + kw] = acc;
      }
    }
  }
}

inline double bias_grad(const ConvGeometry& g, const double* dy, std::size_t o) {
  const std::size_t out_vol = g.out_volume();
  double acc = 0.0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* dyo = dy + (n * g.out_channels + o) * out_vol;
    for (std::size_t i = 0; i < out_vol; ++i) acc += dyo[i];
  }
  return acc;
}

// dx for one batch item; overwrites dx_n.
inline void input_grad(const ConvGeometry& g, const double* w, const double* dy_n, double* dx_n) {
  const std::size_t in_vol = g.in_volume();
  const std::size_t out_vol = g.out_volume();
  const std::size_t k_vol = g.kernel_volume();
  const auto [iD, iH, iW] = g.in;
  const auto [oD, oH, oW] = g.out;
  const std::size_t sw = g.stride[2];
  const std::size_t pw = g.pad_before[2];
  std::fill(dx_n, dx_n + g.in_channels * in_vol, 0.0);
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    const double* dyo = dy_n + o * out_vol;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      double* dxc = dx_n + c * in_vol;
      const double* wk = w + (o * g.in_channels + c) * k_vol;
      for (std::size_t kd = 0; kd < g.kernel[0]; ++kd) {
        const Range rd = valid_outputs(iD, kd, g.stride[0], g.pad_before[0], oD);
        for (std::size_t kh = 0; kh < g.kernel[1]; ++kh) {
          const Range rh = valid_outputs(iH, kh, g.stride[1], g.pad_before[1], oH);
          for (std::size_t kw = 0; kw < g.kernel[2]; ++kw) {
            const Range rw = valid_outputs(iW, kw, sw, g.pad_before[2], oW);
            const double wv = wk[(kd * g.kernel[1] + kh) * g.kernel[2] + kw];
            for (std::size_t od = rd.lo; od < rd.hi; ++od) {
              const std::size_t id = input_pos(od, kd, g.stride[0], g.pad_before[0]);
              for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
                const std::size_t ih = input_pos(oh, kh, g.stride[1], g.pad_before[1]);
                const double* dyrow = dyo + (od * oH + oh) * oW;
                double* dxrow = dxc + (id * iH + ih) * iW;
                scatter_row(dxrow + (rw.lo * sw + kw - pw), dyrow + rw.lo, wv, rw.hi - rw.lo, sw);
              }
            }
          }
        }
      }
    }
  }
}

// Narrow maps: rows are too short to vectorise, so the channel axis is the
// inner loop instead. Element-wise summation order is the same as above.

inline bool use_narrow(const ConvGeometry& g) { return g.out[2] < kNarrowWidth; }

// Valid kernel taps [lo, hi) for output position o.
inline Range valid_taps(std::size_t o, std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  const long base = static_cast<long>(o * stride) - static_cast<long>(pad);
  const long lo = std::max<long>(0, -base);
  const long hi = std::min<long>(static_cast<long>(k), static_cast<long>(in) - base);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// w [O, C, taps] -> wt [C, taps, O]
inline void weights_c_tap_o(const ConvGeometry& g, const double* w, double* wt) {
  const std::size_t kv = g.kernel_volume(), O = g.out_channels, C = g.in_channels;
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < kv; ++t) wt[(c * kv + t) * O + o] = w[(o * C + c) * kv + t];
}

// w [O, C, taps] -> wt [O, taps, C]
inline void weights_o_tap_c(const ConvGeometry& g, const double* w, double* wt) {
  const std::size_t kv = g.kernel_volume(), C = g.in_channels;
  for (std::size_t o = 0; o < g.out_channels; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < kv; ++t) wt[(o * kv + t) * C + c] = w[(o * C + c) * kv + t];
}

// All output channels of one batch item. `acc` holds out_channels doubles.
inline void forward_item_narrow(const ConvGeometry& g, const double* x_n, const double* wt, const double* bias,
                                double* y_n, double* __restrict acc) {
  const auto [iD, iH, iW] = g.in;
  const auto [oD, oH, oW] = g.out;
  const auto [kD, kH, kW] = g.kernel;
  const std::size_t O = g.out_channels, in_vol = g.in_volume(), out_vol = g.out_volume();
  for (std::size_t od = 0; od < oD; ++od) {
    const Range td = valid_taps(od, iD, kD, g.stride[0], g.pad_before[0]);
    for (std::size_t oh = 0; oh < oH; ++oh) {
      const Range th = valid_taps(oh, iH, kH, g.stride[1], g.pad_before[1]);
      for (std::size_t ow = 0; ow < oW; ++ow) {
        const Range tw = valid_taps(ow, iW, kW, g.stride[2], g.pad_before[2]);
        std::copy(bias, bias + O, acc);
        for (std::size_t c = 0; c < g.in_channels; ++c) {
          const double* xc = x_n + c * in_vol;
          for (std::size_t kd = td.lo; kd < td.hi; ++kd) {
            const std::size_t id = input_pos(od, kd, g.stride[0], g.pad_before[0]);
            for (std::size_t kh = th.lo; kh < th.hi; ++kh) {
              const std::size_t ih = input_pos(oh, kh, g.stride[1], g.pad_before[1]);
              const double* xrow = xc + (id * iH + ih) * iW;
              const double* wrow = wt + ((c * kD + kd) * kH + kh) * kW * O;
              for (std::size_t kw = tw.lo; kw < tw.hi; ++kw) {
                const double xv = xrow[input_pos(ow, kw, g.stride[2], g.pad_before[2])];
                const double* __restrict wo = wrow + kw * O;
                for (std::size_t o = 0; o < O; ++o) acc[o] += wo[o] * xv;
              }
            }
          }
        }
        const std::size_t pos = (od * oH + oh) * oW + ow;
        for (std::size_t o = 0; o < O; ++o) y_n[o * out_vol + pos] = acc[o];
      }
    }
  }
}

// dwt[taps, O] for input channel c, summed over batch and output positions in
// ascending order. `dyv` holds out_channels doubles.
inline void weight_grad_narrow(const ConvGeometry& g, const double* x, const double* dy, std::size_t c,
                               double* __restrict dwt, double* __restrict dyv) {
  const auto [iD, iH, iW] = g.in;
  const auto [oD, oH, oW] = g.out;
  const auto [kD, kH, kW] = g.kernel;
  const std::size_t O = g.out_channels, in_vol = g.in_volume(), out_vol = g.out_volume();
  std::fill(dwt, dwt + g.kernel_volume() * O, 0.0);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* xc = x + (n * g.in_channels + c) * in_vol;
    const double* dy_n = dy + n * O * out_vol;
    for (std::size_t od = 0; od < oD; ++od) {
      const Range td = valid_taps(od, iD, kD, g.stride[0], g.pad_before[0]);
      for (std::size_t oh = 0; oh < oH; ++oh) {
        const Range th = valid_taps(oh, iH, kH, g.stride[1], g.pad_before[1]);
        for (std::size_t ow = 0; ow < oW; ++ow) {
          const Range tw = valid_taps(ow, iW, kW, g.stride[2], g.pad_before[2]);
          const std::size_t pos = (od * oH + oh) * oW + ow;
          for (std::size_t o = 0; o < O; ++o) dyv[o] = dy_n[o * out_vol + pos];
          for (std::size_t kd = td.lo; kd < td.hi; ++kd) {
            const std::size_t id = input_pos(od, kd, g.stride[0], g.pad_before[0]);
            for (std::size_t kh = th.lo; kh < th.hi; ++kh) {
              const std::size_t ih = input_pos(oh, kh, g.stride[1], g.pad_before[1]);
              const double* xrow = xc + (id * iH + ih) * iW;
              for (std::size_t kw = tw.lo; kw < tw.hi; ++kw) {
                const double xv = xrow[input_pos(ow, kw, g.stride[2], g.pad_before[2])];
                double* __restrict d = dwt + ((kd * kH + kh) * kW + kw) * O;
                for (std::size_t o = 0; o < O; ++o) d[o] += dyv[o] * xv;
              }
            }
          }
        }
      }
    }
  }
}

// Output position that reads input position i through tap k, if any.
inline bool output_of(std::size_t i, std::size_t k, std::size_t stride, std::size_t pad, std::size_t out,
                      std::size_t& o) {
  const long t = static_cast<long>(i + pad) - static_cast<long>(k);
  if (t < 0 || t % static_cast<long>(stride) != 0) return false;
  o = static_cast<std::size_t>(t) / stride;
  return o < out;
}

// dx for one batch item as a gather over (o, output position); taps run in
// descending order so output positions ascend. `acc` holds in_channels
// doubles; wt is [O, taps, C].
inline void input_grad_narrow(const ConvGeometry& g, const double* wt, const double* dy_n, double* dx_n,
                              double* __restrict acc) {
  const auto [iD, iH, iW] = g.in;
  const auto [oD, oH, oW] = g.out;
  const auto [kD, kH, kW] = g.kernel;
  const std::size_t C = g.in_channels, in_vol = g.in_volume(), out_vol = g.out_volume(), kv = g.kernel_volume();
  for (std::size_t id = 0; id < iD; ++id)
    for (std::size_t ih = 0; ih < iH; ++ih)
      for (std::size_t iw = 0; iw < iW; ++iw) {
        std::fill(acc, acc + C, 0.0);
        for (std::size_t o = 0; o < g.out_channels; ++o) {
          const double* dyo = dy_n + o * out_vol;
          for (std::size_t kd = kD; kd-- > 0;) {
            std::size_t od;
            if (!output_of(id, kd, g.stride[0], g.pad_before[0], oD, od)) continue;
            for (std::size_t kh = kH; kh-- > 0;) {
              std::size_t oh;
              if (!output_of(ih, kh, g.stride[1], g.pad_before[1], oH, oh)) continue;
              for (std::size_t kw = kW; kw-- > 0;) {
                std::size_t ow;
                if (!output_of(iw, kw, g.stride[2], g.pad_before[2], oW, ow)) continue;
                const double d = dyo[(od * oH + oh) * oW + ow];
                const double* __restrict wc = wt + (o * kv + (kd * kH + kh) * kW + kw) * C;
                for (std::size_t c = 0; c < C; ++c) acc[c] += wc[c] * d;
              }
            }
          }
        }
        const std::size_t ipos = (id * iH + ih) * iW + iw;
        for (std::size_t c = 0; c < C; ++c) dx_n[c * in_vol + ipos] = acc[c];
      }
}

}  // namespace pifnet::kernels::detail
