#pragma once

#include <cstdint>

namespace reffakd::kern {

/// Geometry for a (transposed) convolution. All kernels take the same
/// struct; `hout/wout` are filled by the dims helpers below.
struct ConvDims {
  int n = 1;       // batch
  int cin = 1;     // input channels
  int hin = 1, win = 1;
  int cout = 1;    // output channels
  int k = 1;       // square kernel
  int stride = 1;
  int pad = 0;
  int outpad = 0;  // transposed conv only
  int hout = 0, wout = 0;
};

/// out = floor((H + 2p - k)/s) + 1; throws if any output extent is < 1.
ConvDims conv2d_dims(int n, int cin, int hin, int win, int cout, int k, int stride, int pad);
/// out = (H - 1)*s - 2p + k + outpad; throws if any output extent is < 1.
ConvDims conv_transpose2d_dims(int n, int cin, int hin, int win, int cout, int k, int stride,
                               int pad, int outpad);

// Parallel kernels. Each output slot is owned by exactly one thread and its
// reduction runs in a fixed serial order, so results are bit-identical for
// any thread count. Backward kernels accumulate (+=) into their outputs.
// Weight layout: conv [cout][cin][k][k], transposed conv [cin][cout][k][k].
// `bias` may be null.

void conv2d_forward(const double* in, const double* w, const double* bias, double* out,
                    const ConvDims& d);
void conv2d_backward_input(const double* dout, const double* w, double* din, const ConvDims& d);
void conv2d_backward_weight(const double* in, const double* dout, double* dw, const ConvDims& d);
void conv2d_backward_bias(const double* dout, double* db, const ConvDims& d);

void conv_transpose2d_forward(const double* in, const double* w, const double* bias, double* out,
                              const ConvDims& d);
void conv_transpose2d_backward_input(const double* dout, const double* w, double* din,
                                     const ConvDims& d);
void conv_transpose2d_backward_weight(const double* in, const double* dout, double* dw,
                                      const ConvDims& d);
void conv_transpose2d_backward_bias(const double* dout, double* db, const ConvDims& d);

void linear_forward(const double* in, const double* w, const double* bias, double* out, int n,
                    int fin, int fout);
void linear_backward_input(const double* dout, const double* w, double* din, int n, int fin,
                           int fout);
void linear_backward_weight(const double* in, const double* dout, double* dw, int n, int fin,
                            int fout);
void linear_backward_bias(const double* dout, double* db, int n, int fout);

/// `argmax` records the flat (h*w) index of the max inside each plane;
/// ties resolve to the first position in scan order. Padding positions never
/// win (treated as -inf); average pooling counts them as zeros.
void maxpool2d_forward(const double* in, double* out, int32_t* argmax, int n, int c, int h, int w,
                       int k, int s, int p, int ho, int wo);
void maxpool2d_backward(const double* dout, const int32_t* argmax, double* din, int n, int c,
                        int h, int w, int k, int s, int p, int ho, int wo);
void avgpool2d_forward(const double* in, double* out, int n, int c, int h, int w, int k, int s,
                       int p, int ho, int wo);
void avgpool2d_backward(const double* dout, double* din, int n, int c, int h, int w, int k, int s,
                        int p, int ho, int wo);

void relu_forward(const double* in, double* out, int64_t count);
void relu_backward(const double* in, const double* dout, double* din, int64_t count);
void sigmoid_forward(const double* in, double* out, int64_t count);
void sigmoid_backward(const double* out, const double* dout, double* din, int64_t count);

/// Training-mode batch norm: per-channel batch statistics (biased variance),
/// running buffers updated as run = (1-momentum)*run + momentum*batch.
/// `xhat` (same size as `in`) is saved for backward.
void batchnorm2d_forward_train(const double* in, const double* gamma, const double* beta,
                               double* out, double* xhat, double* mean, double* var,
                               double* running_mean, double* running_var, int n, int c, int h,
                               int w, double momentum, double eps);
void batchnorm2d_forward_eval(const double* in, const double* gamma, const double* beta,
                              const double* running_mean, const double* running_var, double* out,
                              int n, int c, int h, int w, double eps);
void batchnorm2d_backward(const double* dout, const double* xhat, const double* gamma,
                          const double* var, double* din, double* dgamma, double* dbeta, int n,
                          int c, int h, int w, double eps);

/// Row-wise softmax of in/temperature with max subtraction.
void row_softmax(const double* in, double* out, int rows, int cols, double temperature);

/// Mean cosine similarity between class blocks of `vecs` ([c][n][d]).
/// Off-diagonal cells average all n*n ordered cross pairs; diagonal cells
/// average the n*(n-1) ordered distinct same-class pairs. `norms` holds the
/// c*n vector norms. Output is the c x c pre-boost matrix; each upper cell
/// is accumulated once and mirrored, so symmetry is exact.
void class_mean_cosine(const double* vecs, const double* norms, int c, int n, int d, double* out);

/// Serial reference implementations. Same contracts and the same per-slot
/// reduction order as the parallel kernels above; kept for parity tests and
/// the kernel benchmark.
namespace serial {
void conv2d_forward(const double* in, const double* w, const double* bias, double* out,
                    const ConvDims& d);
void conv2d_backward_input(const double* dout, const double* w, double* din, const ConvDims& d);
void conv2d_backward_weight(const double* in, const double* dout, double* dw, const ConvDims& d);
void conv2d_backward_bias(const double* dout, double* db, const ConvDims& d);
void conv_transpose2d_forward(const double* in, const double* w, const double* bias, double* out,
                              const ConvDims& d);
void conv_transpose2d_backward_input(const double* dout, const double* w, double* din,
                                     const ConvDims& d);
void conv_transpose2d_backward_weight(const double* in, const double* dout, double* dw,
                                      const ConvDims& d);
void conv_transpose2d_backward_bias(const double* dout, double* db, const ConvDims& d);
void linear_forward(const double* in, const double* w, const double* bias, double* out, int n,
                    int fin, int fout);
void linear_backward_input(const double* dout, const double* w, double* din, int n, int fin,
                           int fout);
void linear_backward_weight(const double* in, const double* dout, double* dw, int n, int fin,
                            int fout);
void linear_backward_bias(const double* dout, double* db, int n, int fout);
void maxpool2d_forward(const double* in, double* out, int32_t* argmax, int n, int c, int h, int w,
                       int k, int s, int p, int ho, int wo);
void maxpool2d_backward(const double* dout, const int32_t* argmax, double* din, int n, int c,
                        int h, int w, int k, int s, int p, int ho, int wo);
void avgpool2d_forward(const double* in, double* out, int n, int c, int h, int w, int k, int s,
                       int p, int ho, int wo);
void avgpool2d_backward(const double* dout, double* din, int n, int c, int h, int w, int k, int s,
                        int p, int ho, int wo);
void batchnorm2d_forward_train(const double* in, const double* gamma, const double* beta,
                               double* out, double* xhat, double* mean, double* var,
                               double* running_mean, double* running_var, int n, int c, int h,
                               int w, double momentum, double eps);
void batchnorm2d_backward(const double* dout, const double* xhat, const double* gamma,
                          const double* var, double* din, double* dgamma, double* dbeta, int n,
                          int c, int h, int w, double eps);
void class_mean_cosine(const double* vecs, const double* norms, int c, int n, int d, double* out);
}  // namespace serial

}  // namespace reffakd::kern
