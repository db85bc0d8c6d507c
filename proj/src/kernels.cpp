#include "reffakd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace reffakd::kern {

namespace {

int floor_div(int a, int b) {  // b > 0
  int q = a / b;
  if (a % b != 0 && a < 0) --q;
  return q;
}

int ceil_div(int a, int b) {  // b > 0
  return -floor_div(-a, b);
}

void check_common(const char* who, int n, int cin, int hin, int win, int cout, int k, int stride,
                  int pad) {
  if (n < 1 || cin < 1 || hin < 1 || win < 1 || cout < 1)
    throw std::invalid_argument(std::string(who) + ": extents must be positive");
  if (k < 1) throw std::invalid_argument(std::string(who) + ": kernel must be >= 1");
  if (stride < 1) throw std::invalid_argument(std::string(who) + ": stride must be >= 1");
  if (pad < 0) throw std::invalid_argument(std::string(who) + ": pad must be >= 0");
}

}  // namespace

ConvDims conv2d_dims(int n, int cin, int hin, int win, int cout, int k, int stride, int pad) {
  check_common("conv2d", n, cin, hin, win, cout, k, stride, pad);
  ConvDims d;
  d.n = n;
  d.cin = cin;
  d.hin = hin;
  d.win = win;
  d.cout = cout;
  d.k = k;
  d.stride = stride;
  d.pad = pad;
  const int hn = hin + 2 * pad - k;
  const int wn = win + 2 * pad - k;
  if (hn < 0 || wn < 0)
    throw std::invalid_argument("conv2d: kernel " + std::to_string(k) + " does not fit padded " +
                                std::to_string(hin) + "x" + std::to_string(win));
  d.hout = hn / stride + 1;
  d.wout = wn / stride + 1;
  return d;
}

ConvDims conv_transpose2d_dims(int n, int cin, int hin, int win, int cout, int k, int stride,
                               int pad, int outpad) {
  check_common("conv_transpose2d", n, cin, hin, win, cout, k, stride, pad);
  if (outpad < 0 || outpad >= stride)
    throw std::invalid_argument("conv_transpose2d: outpad must be in [0, stride)");
  ConvDims d;
  d.n = n;
  d.cin = cin;
  d.hin = hin;
  d.win = win;
  d.cout = cout;
  d.k = k;
  d.stride = stride;
  d.pad = pad;
  d.outpad = outpad;
  d.hout = (hin - 1) * stride - 2 * pad + k + outpad;
  d.wout = (win - 1) * stride - 2 * pad + k + outpad;
  if (d.hout < 1 || d.wout < 1)
    throw std::invalid_argument("conv_transpose2d: output extents collapse below 1");
  return d;
}

// The conv kernels below stream each (channel, kh, kw) tap over the whole
// plane so consecutive adds hit different elements: no dependent FP-add chain,
// and the inner loops are contiguous.  Per output element the terms still
// arrive in ascending (ci, kh, kw) order with bias last, so results match a
// per-element gather bit for bit.
void conv2d_forward(const double* in, const double* w, const double* bias, double* out,
                    const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int nn = 0; nn < d.n; ++nn)
    for (int co = 0; co < d.cout; ++co) {
      double* out_p = out + ((int64_t)(nn * d.cout + co) * d.hout) * d.wout;
      const int64_t plane = (int64_t)d.hout * d.wout;
      std::fill(out_p, out_p + plane, 0.0);
      for (int ci = 0; ci < d.cin; ++ci) {
        const double* in_p = in + ((int64_t)(nn * d.cin + ci) * d.hin) * d.win;
        const double* w_p = w + ((int64_t)(co * d.cin + ci) * d.k) * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          const int oh_lo = std::max(0, ceil_div(d.pad - kh, d.stride));
          const int oh_hi = std::min(d.hout, floor_div(d.hin - 1 + d.pad - kh, d.stride) + 1);
          for (int kw = 0; kw < d.k; ++kw) {
            const int ow_lo = std::max(0, ceil_div(d.pad - kw, d.stride));
            const int ow_hi = std::min(d.wout, floor_div(d.win - 1 + d.pad - kw, d.stride) + 1);
            const double wv = w_p[(int64_t)kh * d.k + kw];
            const int off = kw - d.pad;
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              const double* __restrict in_row = in_p + (int64_t)(oh * d.stride - d.pad + kh) * d.win;
              double* __restrict out_row = out_p + (int64_t)oh * d.wout;
              if (d.stride == 1) {
                for (int ow = ow_lo; ow < ow_hi; ++ow) out_row[ow] += wv * in_row[ow + off];
              } else {
                for (int ow = ow_lo; ow < ow_hi; ++ow)
                  out_row[ow] += wv * in_row[(int64_t)ow * d.stride + off];
              }
            }
          }
        }
      }
      if (bias) {
        const double bv = bias[co];
        for (int64_t i = 0; i < plane; ++i) out_p[i] += bv;
      }
    }
}

void conv2d_backward_input(const double* dout, const double* w, double* din, const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int nn = 0; nn < d.n; ++nn)
    for (int ci = 0; ci < d.cin; ++ci) {
      // Accumulate the full plane in scratch, then fold into din with one
      // add per element, matching din += <complete sum> semantics.
      std::vector<double> acc((size_t)d.hin * d.win, 0.0);
      for (int co = 0; co < d.cout; ++co) {
        const double* w_p = w + ((int64_t)(co * d.cin + ci) * d.k) * d.k;
        const double* dout_p = dout + ((int64_t)(nn * d.cout + co) * d.hout) * d.wout;
        for (int kh = 0; kh < d.k; ++kh) {
          const int oh_lo = std::max(0, ceil_div(d.pad - kh, d.stride));
          const int oh_hi = std::min(d.hout, floor_div(d.hin - 1 + d.pad - kh, d.stride) + 1);
          for (int kw = 0; kw < d.k; ++kw) {
            const int ow_lo = std::max(0, ceil_div(d.pad - kw, d.stride));
            const int ow_hi = std::min(d.wout, floor_div(d.win - 1 + d.pad - kw, d.stride) + 1);
            const double wv = w_p[(int64_t)kh * d.k + kw];
            const int off = kw - d.pad;
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              double* __restrict acc_row = acc.data() + (int64_t)(oh * d.stride - d.pad + kh) * d.win;
              const double* __restrict dout_row = dout_p + (int64_t)oh * d.wout;
              if (d.stride == 1) {
                for (int ow = ow_lo; ow < ow_hi; ++ow) acc_row[ow + off] += wv * dout_row[ow];
              } else {
                for (int ow = ow_lo; ow < ow_hi; ++ow)
                  acc_row[(int64_t)ow * d.stride + off] += wv * dout_row[ow];
              }
            }
          }
        }
      }
      double* din_p = din + ((int64_t)(nn * d.cin + ci) * d.hin) * d.win;
      const int64_t plane = (int64_t)d.hin * d.win;
      for (int64_t i = 0; i < plane; ++i) din_p[i] += acc[i];
    }
}

void conv2d_backward_weight(const double* in, const double* dout, double* dw, const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < d.cout; ++co)
    for (int ci = 0; ci < d.cin; ++ci) {
      // k*k independent accumulators advance together per dout element, so no
      // single chain gates progress; each still sums in (n, oh, ow) order.
      std::vector<double> acc((size_t)d.k * d.k, 0.0);
      for (int nn = 0; nn < d.n; ++nn) {
        const double* in_p = in + ((int64_t)(nn * d.cin + ci) * d.hin) * d.win;
        const double* dout_p = dout + ((int64_t)(nn * d.cout + co) * d.hout) * d.wout;
        for (int oh = 0; oh < d.hout; ++oh) {
          const int ih0 = oh * d.stride - d.pad;
          const int kh_lo = std::max(0, -ih0);
          const int kh_hi = std::min(d.k, d.hin - ih0);
          const double* dout_row = dout_p + (int64_t)oh * d.wout;
          for (int ow = 0; ow < d.wout; ++ow) {
            const int iw0 = ow * d.stride - d.pad;
            const int kw_lo = std::max(0, -iw0);
            const int kw_hi = std::min(d.k, d.win - iw0);
            const double dv = dout_row[ow];
            for (int kh = kh_lo; kh < kh_hi; ++kh) {
              const double* __restrict in_row = in_p + (int64_t)(ih0 + kh) * d.win;
              double* __restrict acc_row = acc.data() + (int64_t)kh * d.k;
              for (int kw = kw_lo; kw < kw_hi; ++kw) acc_row[kw] += in_row[iw0 + kw] * dv;
            }
          }
        }
      }
      const int64_t kk = (int64_t)d.k * d.k;
      double* dw_p = dw + (int64_t)(co * d.cin + ci) * kk;
      for (int64_t i = 0; i < kk; ++i) dw_p[i] += acc[i];
    }
}

void conv2d_backward_bias(const double* dout, double* db, const ConvDims& d) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < d.cout; ++co) {
    double acc = 0.0;
    for (int nn = 0; nn < d.n; ++nn) {
      const double* p = dout + ((int64_t)(nn * d.cout + co) * d.hout) * d.wout;
      const int64_t plane = (int64_t)d.hout * d.wout;
      for (int64_t i = 0; i < plane; ++i) acc += p[i];
    }
    db[co] += acc;
  }
}

void conv_transpose2d_forward(const double* in, const double* w, const double* bias, double* out,
                              const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int nn = 0; nn < d.n; ++nn)
    for (int co = 0; co < d.cout; ++co) {
      double* out_p = out + ((int64_t)(nn * d.cout + co) * d.hout) * d.wout;
      const int64_t plane = (int64_t)d.hout * d.wout;
      std::fill(out_p, out_p + plane, 0.0);
      for (int ci = 0; ci < d.cin; ++ci) {
        const double* in_p = in + ((int64_t)(nn * d.cin + ci) * d.hin) * d.win;
        const double* w_p = w + ((int64_t)(ci * d.cout + co) * d.k) * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          const int ih_lo = std::max(0, ceil_div(d.pad - kh, d.stride));
          const int ih_hi = std::min(d.hin, floor_div(d.hout - 1 + d.pad - kh, d.stride) + 1);
          for (int kw = 0; kw < d.k; ++kw) {
            const int iw_lo = std::max(0, ceil_div(d.pad - kw, d.stride));
            const int iw_hi = std::min(d.win, floor_div(d.wout - 1 + d.pad - kw, d.stride) + 1);
            const double wv = w_p[(int64_t)kh * d.k + kw];
            const int off = kw - d.pad;
            for (int ih = ih_lo; ih < ih_hi; ++ih) {
              const double* __restrict in_row = in_p + (int64_t)ih * d.win;
              double* __restrict out_row = out_p + (int64_t)(ih * d.stride - d.pad + kh) * d.wout;
              for (int iw = iw_lo; iw < iw_hi; ++iw)
                out_row[(int64_t)iw * d.stride + off] += wv * in_row[iw];
            }
          }
        }
      }
      if (bias) {
        const double bv = bias[co];
        for (int64_t i = 0; i < plane; ++i) out_p[i] += bv;
      }
    }
}

void conv_transpose2d_backward_input(const double* dout, const double* w, double* din,
                                     const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int nn = 0; nn < d.n; ++nn)
    for (int ci = 0; ci < d.cin; ++ci) {
      std::vector<double> acc((size_t)d.hin * d.win, 0.0);
      for (int co = 0; co < d.cout; ++co) {
        const double* dout_p = dout + ((int64_t)(nn * d.cout + co) * d.hout) * d.wout;
        const double* w_p = w + ((int64_t)(ci * d.cout + co) * d.k) * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          const int ih_lo = std::max(0, ceil_div(d.pad - kh, d.stride));
          const int ih_hi = std::min(d.hin, floor_div(d.hout - 1 + d.pad - kh, d.stride) + 1);
          for (int kw = 0; kw < d.k; ++kw) {
            const int iw_lo = std::max(0, ceil_div(d.pad - kw, d.stride));
            const int iw_hi = std::min(d.win, floor_div(d.wout - 1 + d.pad - kw, d.stride) + 1);
            const double wv = w_p[(int64_t)kh * d.k + kw];
            const int off = kw - d.pad;
            for (int ih = ih_lo; ih < ih_hi; ++ih) {
              double* __restrict acc_row = acc.data() + (int64_t)ih * d.win;
              const double* __restrict dout_row = dout_p + (int64_t)(ih * d.stride - d.pad + kh) * d.wout;
              for (int iw = iw_lo; iw < iw_hi; ++iw)
                acc_row[iw] += wv * dout_row[(int64_t)iw * d.stride + off];
            }
          }
        }
      }
      double* din_p = din + ((int64_t)(nn * d.cin + ci) * d.hin) * d.win;
      const int64_t plane = (int64_t)d.hin * d.win;
      for (int64_t i = 0; i < plane; ++i) din_p[i] += acc[i];
    }
}

void conv_transpose2d_backward_weight(const double* in, const double* dout, double* dw,
                                      const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int ci = 0; ci < d.cin; ++ci)
    for (int co = 0; co < d.cout; ++co) {
      std::vector<double> acc((size_t)d.k * d.k, 0.0);
      for (int nn = 0; nn < d.n; ++nn) {
        const double* in_p = in + ((int64_t)(nn * d.cin + ci) * d.hin) * d.win;
        const double* dout_p = dout + ((int64_t)(nn * d.cout + co) * d.hout) * d.wout;
        for (int ih = 0; ih < d.hin; ++ih) {
          const int oh0 = ih * d.stride - d.pad;
          const int kh_lo = std::max(0, -oh0);
          const int kh_hi = std::min(d.k, d.hout - oh0);
          const double* in_row = in_p + (int64_t)ih * d.win;
          for (int iw = 0; iw < d.win; ++iw) {
            const int ow0 = iw * d.stride - d.pad;
            const int kw_lo = std::max(0, -ow0);
            const int kw_hi = std::min(d.k, d.wout - ow0);
            const double v = in_row[iw];
            for (int kh = kh_lo; kh < kh_hi; ++kh) {
              const double* __restrict dout_row = dout_p + (int64_t)(oh0 + kh) * d.wout;
              double* __restrict acc_row = acc.data() + (int64_t)kh * d.k;
              for (int kw = kw_lo; kw < kw_hi; ++kw) acc_row[kw] += v * dout_row[ow0 + kw];
            }
          }
        }
      }
      const int64_t kk = (int64_t)d.k * d.k;
      double* dw_p = dw + (int64_t)(ci * d.cout + co) * kk;
      for (int64_t i = 0; i < kk; ++i) dw_p[i] += acc[i];
    }
}

void conv_transpose2d_backward_bias(const double* dout, double* db, const ConvDims& d) {
  conv2d_backward_bias(dout, db, d);
}

void linear_forward(const double* in, const double* w, const double* bias, double* out, int n,
                    int fin, int fout) {
  // Four output features run side by side: four independent accumulator
  // chains hide the FP-add latency while each keeps its ascending-fi order.
#pragma omp parallel for schedule(static)
  for (int nn = 0; nn < n; ++nn) {
    const double* in_row = in + (int64_t)nn * fin;
    double* out_row = out + (int64_t)nn * fout;
    int fo = 0;
    for (; fo + 4 <= fout; fo += 4) {
      const double* w0 = w + (int64_t)fo * fin;
      const double* w1 = w0 + fin;
      const double* w2 = w1 + fin;
      const double* w3 = w2 + fin;
      double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
      for (int fi = 0; fi < fin; ++fi) {
        const double x = in_row[fi];
        a0 += x * w0[fi];
        a1 += x * w1[fi];
        a2 += x * w2[fi];
        a3 += x * w3[fi];
      }
      if (bias) {
        a0 += bias[fo];
        a1 += bias[fo + 1];
        a2 += bias[fo + 2];
        a3 += bias[fo + 3];
      }
      out_row[fo] = a0;
      out_row[fo + 1] = a1;
      out_row[fo + 2] = a2;
      out_row[fo + 3] = a3;
    }
    for (; fo < fout; ++fo) {
      const double* w_row = w + (int64_t)fo * fin;
      double acc = 0.0;
      for (int fi = 0; fi < fin; ++fi) acc += in_row[fi] * w_row[fi];
      if (bias) acc += bias[fo];
      out_row[fo] = acc;
    }
  }
}

void linear_backward_input(const double* dout, const double* w, double* din, int n, int fin,
                           int fout) {
#pragma omp parallel for schedule(static)
  for (int nn = 0; nn < n; ++nn) {
    std::vector<double> acc((size_t)fin, 0.0);
    const double* dout_row = dout + (int64_t)nn * fout;
    for (int fo = 0; fo < fout; ++fo) {
      const double dv = dout_row[fo];
      const double* __restrict w_row = w + (int64_t)fo * fin;
      double* __restrict acc_p = acc.data();
      for (int fi = 0; fi < fin; ++fi) acc_p[fi] += dv * w_row[fi];
    }
    double* din_row = din + (int64_t)nn * fin;
    for (int fi = 0; fi < fin; ++fi) din_row[fi] += acc[fi];
  }
}

void linear_backward_weight(const double* in, const double* dout, double* dw, int n, int fin,
                            int fout) {
#pragma omp parallel for schedule(static)
  for (int fo = 0; fo < fout; ++fo) {
    std::vector<double> acc((size_t)fin, 0.0);
    for (int nn = 0; nn < n; ++nn) {
      const double dv = dout[(int64_t)nn * fout + fo];
      const double* __restrict in_row = in + (int64_t)nn * fin;
      double* __restrict acc_p = acc.data();
      for (int fi = 0; fi < fin; ++fi) acc_p[fi] += dv * in_row[fi];
    }
    double* dw_row = dw + (int64_t)fo * fin;
    for (int fi = 0; fi < fin; ++fi) dw_row[fi] += acc[fi];
  }
}

void linear_backward_bias(const double* dout, double* db, int n, int fout) {
#pragma omp parallel for schedule(static)
  for (int fo = 0; fo < fout; ++fo) {
    double acc = 0.0;
    for (int nn = 0; nn < n; ++nn) acc += dout[(int64_t)nn * fout + fo];
    db[fo] += acc;
  }
}

void maxpool2d_forward(const double* in, double* out, int32_t* argmax, int n, int c, int h, int w,
                       int k, int s, int p, int ho, int wo) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int nn = 0; nn < n; ++nn)
    for (int cc = 0; cc < c; ++cc) {
      const double* plane = in + ((int64_t)(nn * c + cc) * h) * w;
      const int64_t out_base = ((int64_t)(nn * c + cc) * ho) * wo;
      for (int oh = 0; oh < ho; ++oh) {
        const int ih0 = oh * s - p;
        const int kh_lo = std::max(0, -ih0);
        const int kh_hi = std::min(k, h - ih0);
        for (int ow = 0; ow < wo; ++ow) {
          const int iw0 = ow * s - p;
          const int kw_lo = std::max(0, -iw0);
          const int kw_hi = std::min(k, w - iw0);
          double best = -std::numeric_limits<double>::infinity();
          int32_t best_i = 0;
          for (int kh = kh_lo; kh < kh_hi; ++kh) {
            const int ih = ih0 + kh;
            for (int kw = kw_lo; kw < kw_hi; ++kw) {
              const int iw = iw0 + kw;
              const double v = plane[(int64_t)ih * w + iw];
              if (v > best) {
                best = v;
                best_i = (int32_t)(ih * w + iw);
              }
            }
          }
          out[out_base + (int64_t)oh * wo + ow] = best;
          argmax[out_base + (int64_t)oh * wo + ow] = best_i;
        }
      }
    }
}

void maxpool2d_backward(const double* dout, const int32_t* argmax, double* din, int n, int c,
                        int h, int w, int k, int s, int p, int ho, int wo) {
  (void)k;
  (void)s;
  (void)p;
#pragma omp parallel for collapse(2) schedule(static)
  for (int nn = 0; nn < n; ++nn)
    for (int cc = 0; cc < c; ++cc) {
      double* plane = din + ((int64_t)(nn * c + cc) * h) * w;
      const int64_t out_base = ((int64_t)(nn * c + cc) * ho) * wo;
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow)
          plane[argmax[out_base + (int64_t)oh * wo + ow]] += dout[out_base + (int64_t)oh * wo + ow];
    }
}

void avgpool2d_forward(const double* in, double* out, int n, int c, int h, int w, int k, int s,
                       int p, int ho, int wo) {
  const double inv = 1.0 / ((double)k * (double)k);
#pragma omp parallel for collapse(2) schedule(static)
  for (int nn = 0; nn < n; ++nn)
    for (int cc = 0; cc < c; ++cc) {
      const double* plane = in + ((int64_t)(nn * c + cc) * h) * w;
      const int64_t out_base = ((int64_t)(nn * c + cc) * ho) * wo;
      for (int oh = 0; oh < ho; ++oh) {
        const int ih0 = oh * s - p;
        const int kh_lo = std::max(0, -ih0);
        const int kh_hi = std::min(k, h - ih0);
        for (int ow = 0; ow < wo; ++ow) {
          const int iw0 = ow * s - p;
          const int kw_lo = std::max(0, -iw0);
          const int kw_hi = std::min(k, w - iw0);
          double acc = 0.0;
          for (int kh = kh_lo; kh < kh_hi; ++kh) {
            const double* row = plane + (int64_t)(ih0 + kh) * w + iw0;
            for (int kw = kw_lo; kw < kw_hi; ++kw) acc += row[kw];
          }
          out[out_base + (int64_t)oh * wo + ow] = acc * inv;
        }
      }
    }
}

void avgpool2d_backward(const double* dout, double* din, int n, int c, int h, int w, int k, int s,
                        int p, int ho, int wo) {
  const double inv = 1.0 / ((double)k * (double)k);
#pragma omp parallel for collapse(2) schedule(static)
  for (int nn = 0; nn < n; ++nn)
    for (int cc = 0; cc < c; ++cc) {
      double* plane = din + ((int64_t)(nn * c + cc) * h) * w;
      const double* dout_p = dout + ((int64_t)(nn * c + cc) * ho) * wo;
      for (int ih = 0; ih < h; ++ih) {
        const int oh_lo = std::max(0, ceil_div(ih + p - k + 1, s));
        const int oh_hi = std::min(ho, floor_div(ih + p, s) + 1);
        for (int iw = 0; iw < w; ++iw) {
          const int ow_lo = std::max(0, ceil_div(iw + p - k + 1, s));
          const int ow_hi = std::min(wo, floor_div(iw + p, s) + 1);
          double acc = 0.0;
          for (int oh = oh_lo; oh < oh_hi; ++oh)
            for (int ow = ow_lo; ow < ow_hi; ++ow) acc += dout_p[(int64_t)oh * wo + ow];
          plane[(int64_t)ih * w + iw] += acc * inv;
        }
      }
    }
}

void relu_forward(const double* in, double* out, int64_t count) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < count; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void relu_backward(const double* in, const double* dout, double* din, int64_t count) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < count; ++i)
    if (in[i] > 0.0) din[i] += dout[i];
}

void sigmoid_forward(const double* in, double* out, int64_t count) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < count; ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
}

void sigmoid_backward(const double* out, const double* dout, double* din, int64_t count) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < count; ++i) din[i] += dout[i] * out[i] * (1.0 - out[i]);
}

void batchnorm2d_forward_train(const double* in, const double* gamma, const double* beta,
                               double* out, double* xhat, double* mean, double* var,
                               double* running_mean, double* running_var, int n, int c, int h,
                               int w, double momentum, double eps) {
  const int64_t plane = (int64_t)h * w;
  const double inv_count = 1.0 / ((double)n * (double)plane);
#pragma omp parallel for schedule(static)
  for (int cc = 0; cc < c; ++cc) {
    double sum = 0.0;
    for (int nn = 0; nn < n; ++nn) {
      const double* p = in + ((int64_t)(nn * c + cc)) * plane;
      for (int64_t i = 0; i < plane; ++i) sum += p[i];
    }
    const double m = sum * inv_count;
    double vs = 0.0;
    for (int nn = 0; nn < n; ++nn) {
      const double* p = in + ((int64_t)(nn * c + cc)) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const double dv = p[i] - m;
        vs += dv * dv;
      }
    }
    const double v = vs * inv_count;
    mean[cc] = m;
    var[cc] = v;
    running_mean[cc] = (1.0 - momentum) * running_mean[cc] + momentum * m;
    running_var[cc] = (1.0 - momentum) * running_var[cc] + momentum * v;
    const double invstd = 1.0 / std::sqrt(v + eps);
    const double g = gamma[cc];
    const double b = beta[cc];
    for (int nn = 0; nn < n; ++nn) {
      const double* p = in + ((int64_t)(nn * c + cc)) * plane;
      double* xh = xhat + ((int64_t)(nn * c + cc)) * plane;
      double* o = out + ((int64_t)(nn * c + cc)) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const double x = (p[i] - m) * invstd;
        xh[i] = x;
        o[i] = g * x + b;
      }
    }
  }
}

void batchnorm2d_forward_eval(const double* in, const double* gamma, const double* beta,
                              const double* running_mean, const double* running_var, double* out,
                              int n, int c, int h, int w, double eps) {
  const int64_t plane = (int64_t)h * w;
#pragma omp parallel for schedule(static)
  for (int cc = 0; cc < c; ++cc) {
    const double invstd = 1.0 / std::sqrt(running_var[cc] + eps);
    const double m = running_mean[cc];
    const double g = gamma[cc];
    const double b = beta[cc];
    for (int nn = 0; nn < n; ++nn) {
      const double* p = in + ((int64_t)(nn * c + cc)) * plane;
      double* o = out + ((int64_t)(nn * c + cc)) * plane;
      for (int64_t i = 0; i < plane; ++i) o[i] = g * ((p[i] - m) * invstd) + b;
    }
  }
}

void batchnorm2d_backward(const double* dout, const double* xhat, const double* gamma,
                          const double* var, double* din, double* dgamma, double* dbeta, int n,
                          int c, int h, int w, double eps) {
  const int64_t plane = (int64_t)h * w;
  const double inv_count = 1.0 / ((double)n * (double)plane);
#pragma omp parallel for schedule(static)
  for (int cc = 0; cc < c; ++cc) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int nn = 0; nn < n; ++nn) {
      const double* dy = dout + ((int64_t)(nn * c + cc)) * plane;
      const double* xh = xhat + ((int64_t)(nn * c + cc)) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xh[i];
      }
    }
    dgamma[cc] += sum_dy_xhat;
    dbeta[cc] += sum_dy;
    const double mean_dy = sum_dy * inv_count;
    const double mean_dy_xhat = sum_dy_xhat * inv_count;
    const double scale = gamma[cc] / std::sqrt(var[cc] + eps);
    for (int nn = 0; nn < n; ++nn) {
      const double* dy = dout + ((int64_t)(nn * c + cc)) * plane;
      const double* xh = xhat + ((int64_t)(nn * c + cc)) * plane;
      double* dx = din + ((int64_t)(nn * c + cc)) * plane;
      for (int64_t i = 0; i < plane; ++i)
        dx[i] += scale * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
    }
  }
}

void row_softmax(const double* in, double* out, int rows, int cols, double temperature) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double* x = in + (int64_t)r * cols;
    double* y = out + (int64_t)r * cols;
    double m = x[0];
    for (int j = 1; j < cols; ++j)
      if (x[j] > m) m = x[j];
    double s = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double e = std::exp((x[j] - m) / temperature);
      y[j] = e;
      s += e;
    }
    for (int j = 0; j < cols; ++j) y[j] /= s;
  }
}

void class_mean_cosine(const double* vecs, const double* norms, int c, int n, int d, double* out) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int a = 0; a < c; ++a)
    for (int b = 0; b < c; ++b) {
      if (b < a) continue;  // each unordered cell summed once, mirrored below
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const double* va = vecs + ((int64_t)a * n + i) * d;
        const double na = norms[(int64_t)a * n + i];
        for (int j = 0; j < n; ++j) {
          if (a == b && i == j) continue;
          const double* vb = vecs + ((int64_t)b * n + j) * d;
          double dot = 0.0;
          for (int t = 0; t < d; ++t) dot += va[t] * vb[t];
          acc += dot / (na * norms[(int64_t)b * n + j]);
        }
      }
      const int cnt = (a == b) ? n * (n - 1) : n * n;
      out[(int64_t)a * c + b] = acc / (double)cnt;
    }
  for (int a = 0; a < c; ++a)
    for (int b = a + 1; b < c; ++b) out[(int64_t)b * c + a] = out[(int64_t)a * c + b];
}

}  // namespace reffakd::kern
