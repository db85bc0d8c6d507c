// Plain reference kernels. Written as the obvious quadruple loops with
// explicit bounds checks; each output slot reduces in the same term order
// as the parallel kernels, so parity tests compare at zero tolerance.

#include <cmath>
#include <cstdint>
#include <limits>

#include "reffakd/kernels.hpp"

namespace reffakd::kern::serial {

void conv2d_forward(const double* in, const double* w, const double* bias, double* out,
                    const ConvDims& d) {
  for (int nn = 0; nn < d.n; ++nn)
    for (int co = 0; co < d.cout; ++co)
      for (int oh = 0; oh < d.hout; ++oh)
        for (int ow = 0; ow < d.wout; ++ow) {
          double acc = 0.0;
          for (int ci = 0; ci < d.cin; ++ci)
            for (int kh = 0; kh < d.k; ++kh) {
              const int ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.hin) continue;
              for (int kw = 0; kw < d.k; ++kw) {
                const int iw = ow * d.stride - d.pad + kw;
                if (iw < 0 || iw >= d.win) continue;
                acc += in[((int64_t)(nn * d.cin + ci) * d.hin + ih) * d.win + iw] *
                       w[((int64_t)(co * d.cin + ci) * d.k + kh) * d.k + kw];
              }
            }
          if (bias) acc += bias[co];
          out[(((int64_t)nn * d.cout + co) * d.hout + oh) * d.wout + ow] = acc;
        }
}

void conv2d_backward_input(const double* dout, const double* w, double* din, const ConvDims& d) {
  for (int nn = 0; nn < d.n; ++nn)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int ih = 0; ih < d.hin; ++ih)
        for (int iw = 0; iw < d.win; ++iw) {
          double acc = 0.0;
          for (int co = 0; co < d.cout; ++co)
            for (int kh = 0; kh < d.k; ++kh) {
              const int hn = ih + d.pad - kh;
              if (hn < 0 || hn % d.stride != 0) continue;
              const int oh = hn / d.stride;
              if (oh >= d.hout) continue;
              for (int kw = 0; kw < d.k; ++kw) {
                const int wn = iw + d.pad - kw;
                if (wn < 0 || wn % d.stride != 0) continue;
                const int ow = wn / d.stride;
                if (ow >= d.wout) continue;
                acc += w[((int64_t)(co * d.cin + ci) * d.k + kh) * d.k + kw] *
                       dout[(((int64_t)nn * d.cout + co) * d.hout + oh) * d.wout + ow];
              }
            }
          din[((int64_t)(nn * d.cin + ci) * d.hin + ih) * d.win + iw] += acc;
        }
}

void conv2d_backward_weight(const double* in, const double* dout, double* dw, const ConvDims& d) {
  for (int co = 0; co < d.cout; ++co)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int kh = 0; kh < d.k; ++kh)
        for (int kw = 0; kw < d.k; ++kw) {
          double acc = 0.0;
          for (int nn = 0; nn < d.n; ++nn)
            for (int oh = 0; oh < d.hout; ++oh) {
              const int ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.hin) continue;
              for (int ow = 0; ow < d.wout; ++ow) {
                const int iw = ow * d.stride - d.pad + kw;
                if (iw < 0 || iw >= d.win) continue;
                acc += in[((int64_t)(nn * d.cin + ci) * d.hin + ih) * d.win + iw] *
                       dout[(((int64_t)nn * d.cout + co) * d.hout + oh) * d.wout + ow];
              }
            }
          dw[((int64_t)(co * d.cin + ci) * d.k + kh) * d.k + kw] += acc;
        }
}

void conv2d_backward_bias(const double* dout, double* db, const ConvDims& d) {
  for (int co = 0; co < d.cout; ++co) {
    double acc = 0.0;
    for (int nn = 0; nn < d.n; ++nn)
      for (int oh = 0; oh < d.hout; ++oh)
        for (int ow = 0; ow < d.wout; ++ow)
          acc += dout[(((int64_t)nn * d.cout + co) * d.hout + oh) * d.wout + ow];
    db[co] += acc;
  }
}

void conv_transpose2d_forward(const double* in, const double* w, const double* bias, double* out,
                              const ConvDims& d) {
  for (int nn = 0; nn < d.n; ++nn)
    for (int co = 0; co < d.cout; ++co)
      for (int oh = 0; oh < d.hout; ++oh)
        for (int ow = 0; ow < d.wout; ++ow) {
          double acc = 0.0;
          for (int ci = 0; ci < d.cin; ++ci)
            for (int kh = 0; kh < d.k; ++kh) {
              const int hn = oh + d.pad - kh;
              if (hn < 0 || hn % d.stride != 0) continue;
              const int ih = hn / d.stride;
              if (ih >= d.hin) continue;
              for (int kw = 0; kw < d.k; ++kw) {
                const int wn = ow + d.pad - kw;
                if (wn < 0 || wn % d.stride != 0) continue;
                const int iw = wn / d.stride;
                if (iw >= d.win) continue;
                acc += in[((int64_t)(nn * d.cin + ci) * d.hin + ih) * d.win + iw] *
                       w[((int64_t)(ci * d.cout + co) * d.k + kh) * d.k + kw];
              }
            }
          if (bias) acc += bias[co];
          out[(((int64_t)nn * d.cout + co) * d.hout + oh) * d.wout + ow] = acc;
        }
}

void conv_transpose2d_backward_input(const double* dout, const double* w, double* din,
                                     const ConvDims& d) {
  for (int nn = 0; nn < d.n; ++nn)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int ih = 0; ih < d.hin; ++ih)
        for (int iw = 0; iw < d.win; ++iw) {
          double acc = 0.0;
          for (int co = 0; co < d.cout; ++co)
            for (int kh = 0; kh < d.k; ++kh) {
              const int oh = ih * d.stride - d.pad + kh;
              if (oh < 0 || oh >= d.hout) continue;
              for (int kw = 0; kw < d.k; ++kw) {
                const int ow = iw * d.stride - d.pad + kw;
                if (ow < 0 || ow >= d.wout) continue;
                acc += dout[(((int64_t)nn * d.cout + co) * d.hout + oh) * d.wout + ow] *
                       w[((int64_t)(ci * d.cout + co) * d.k + kh) * d.k + kw];
              }
            }
          din[((int64_t)(nn * d.cin + ci) * d.hin + ih) * d.win + iw] += acc;
        }
}

void conv_transpose2d_backward_weight(const double* in, const double* dout, double* dw,
                                      const ConvDims& d) {
  for (int ci = 0; ci < d.cin; ++ci)
    for (int co = 0; co < d.cout; ++co)
      for (int kh = 0; kh < d.k; ++kh)
        for (int kw = 0; kw < d.k; ++kw) {
          double acc = 0.0;
          for (int nn = 0; nn < d.n; ++nn)
            for (int ih = 0; ih < d.hin; ++ih) {
              const int oh = ih * d.stride - d.pad + kh;
              if (oh < 0 || oh >= d.hout) continue;
              for (int iw = 0; iw < d.win; ++iw) {
                const int ow = iw * d.stride - d.pad + kw;
                if (ow < 0 || ow >= d.wout) continue;
                acc += in[((int64_t)(nn * d.cin + ci) * d.hin + ih) * d.win + iw] *
                       dout[(((int64_t)nn * d.cout + co) * d.hout + oh) * d.wout + ow];
              }
            }
          dw[((int64_t)(ci * d.cout + co) * d.k + kh) * d.k + kw] += acc;
        }
}

void conv_transpose2d_backward_bias(const double* dout, double* db, const ConvDims& d) {
  serial::conv2d_backward_bias(dout, db, d);
}

void linear_forward(const double* in, const double* w, const double* bias, double* out, int n,
                    int fin, int fout) {
  for (int nn = 0; nn < n; ++nn)
    for (int fo = 0; fo < fout; ++fo) {
      double acc = 0.0;
      for (int fi = 0; fi < fin; ++fi)
        acc += in[(int64_t)nn * fin + fi] * w[(int64_t)fo * fin + fi];
      if (bias) acc += bias[fo];
      out[(int64_t)nn * fout + fo] = acc;
    }
}

void linear_backward_input(const double* dout, const double* w, double* din, int n, int fin,
                           int fout) {
  for (int nn = 0; nn < n; ++nn)
    for (int fi = 0; fi < fin; ++fi) {
      double acc = 0.0;
      for (int fo = 0; fo < fout; ++fo)
        acc += dout[(int64_t)nn * fout + fo] * w[(int64_t)fo * fin + fi];
      din[(int64_t)nn * fin + fi] += acc;
    }
}

void linear_backward_weight(const double* in, const double* dout, double* dw, int n, int fin,
                            int fout) {
  for (int fo = 0; fo < fout; ++fo)
    for (int fi = 0; fi < fin; ++fi) {
      double acc = 0.0;
      for (int nn = 0; nn < n; ++nn)
        acc += in[(int64_t)nn * fin + fi] * dout[(int64_t)nn * fout + fo];
      dw[(int64_t)fo * fin + fi] += acc;
    }
}

void linear_backward_bias(const double* dout, double* db, int n, int fout) {
  for (int fo = 0; fo < fout; ++fo) {
    double acc = 0.0;
    for (int nn = 0; nn < n; ++nn) acc += dout[(int64_t)nn * fout + fo];
    db[fo] += acc;
  }
}

void maxpool2d_forward(const double* in, double* out, int32_t* argmax, int n, int c, int h, int w,
                       int k, int s, int p, int ho, int wo) {
  for (int nn = 0; nn < n; ++nn)
    for (int cc = 0; cc < c; ++cc) {
      const double* plane = in + ((int64_t)(nn * c + cc) * h) * w;
      const int64_t out_base = ((int64_t)(nn * c + cc) * ho) * wo;
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          double best = -std::numeric_limits<double>::infinity();
          int32_t best_i = 0;
          for (int kh = 0; kh < k; ++kh) {
            const int ih = oh * s - p + kh;
            if (ih < 0 || ih >= h) continue;
            for (int kw = 0; kw < k; ++kw) {
              const int iw = ow * s - p + kw;
              if (iw < 0 || iw >= w) continue;
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

void maxpool2d_backward(const double* dout, const int32_t* argmax, double* din, int n, int c,
                        int h, int w, int k, int s, int p, int ho, int wo) {
  (void)k;
  (void)s;
  (void)p;
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
  for (int nn = 0; nn < n; ++nn)
    for (int cc = 0; cc < c; ++cc) {
      const double* plane = in + ((int64_t)(nn * c + cc) * h) * w;
      const int64_t out_base = ((int64_t)(nn * c + cc) * ho) * wo;
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          double acc = 0.0;
          for (int kh = 0; kh < k; ++kh) {
            const int ih = oh * s - p + kh;
            if (ih < 0 || ih >= h) continue;
            for (int kw = 0; kw < k; ++kw) {
              const int iw = ow * s - p + kw;
              if (iw < 0 || iw >= w) continue;
              acc += plane[(int64_t)ih * w + iw];
            }
          }
          out[out_base + (int64_t)oh * wo + ow] = acc * inv;
        }
    }
}

void avgpool2d_backward(const double* dout, double* din, int n, int c, int h, int w, int k, int s,
                        int p, int ho, int wo) {
  const double inv = 1.0 / ((double)k * (double)k);
  for (int nn = 0; nn < n; ++nn)
    for (int cc = 0; cc < c; ++cc) {
      double* plane = din + ((int64_t)(nn * c + cc) * h) * w;
      const double* dout_p = dout + ((int64_t)(nn * c + cc) * ho) * wo;
      for (int ih = 0; ih < h; ++ih)
        for (int iw = 0; iw < w; ++iw) {
          double acc = 0.0;
          for (int oh = 0; oh < ho; ++oh) {
            const int kh = ih + p - oh * s;
            if (kh < 0 || kh >= k) continue;
            for (int ow = 0; ow < wo; ++ow) {
              const int kw = iw + p - ow * s;
              if (kw < 0 || kw >= k) continue;
              acc += dout_p[(int64_t)oh * wo + ow];
            }
          }
          plane[(int64_t)ih * w + iw] += acc * inv;
        }
    }
}

void batchnorm2d_forward_train(const double* in, const double* gamma, const double* beta,
                               double* out, double* xhat, double* mean, double* var,
                               double* running_mean, double* running_var, int n, int c, int h,
                               int w, double momentum, double eps) {
  const int64_t plane = (int64_t)h * w;
  const double inv_count = 1.0 / ((double)n * (double)plane);
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

void batchnorm2d_backward(const double* dout, const double* xhat, const double* gamma,
                          const double* var, double* din, double* dgamma, double* dbeta, int n,
                          int c, int h, int w, double eps) {
  const int64_t plane = (int64_t)h * w;
  const double inv_count = 1.0 / ((double)n * (double)plane);
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

void class_mean_cosine(const double* vecs, const double* norms, int c, int n, int d, double* out) {
  for (int a = 0; a < c; ++a)
    for (int b = a; b < c; ++b) {
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

}  // namespace reffakd::kern::serial
