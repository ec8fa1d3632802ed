#pragma once

#include <cstddef>

namespace dba::kernels {

// Dense numeric kernels used by the classifier forward pass and the image
// pipeline. Activations are row-major channel-last (H, W, C); conv weights
// are row-major (OC, IC, KH, KW). Every kernel comes in two variants: an
// OpenMP-parallel one (default entry point) and a serial reference kept for
// testing and benchmarking. Both compute each output element with the same
// summation order, so results are bitwise identical.

// 3x3-or-any odd k, stride 1, zero ("same") padding.
void conv2d_same(const double* in, int h, int w, int ic, const double* kernel,
                 const double* bias, int oc, int k, double* out);
void conv2d_same_serial(const double* in, int h, int w, int ic, const double* kernel,
                        const double* bias, int oc, int k, double* out);

void relu_inplace(double* v, size_t n);

// 2x2 window, stride 2. h and w must be even.
void maxpool2(const double* in, int h, int w, int c, double* out);
void maxpool2_serial(const double* in, int h, int w, int c, double* out);

// out[m] = bias[m] + sum_n w[m*n_in + n] * in[n]
void dense(const double* in, int n_in, const double* w, const double* bias, int n_out,
           double* out);
void dense_serial(const double* in, int n_in, const double* w, const double* bias, int n_out,
                  double* out);

// Max-subtracted softmax.
void softmax_inplace(double* v, int n);

// Align-corners-false bilinear: source coord s = (d + 0.5) * (in/out) - 0.5,
// clamped to [0, in-1].
void resize_bilinear(const double* in, int ih, int iw, int c, double* out, int oh, int ow);
void resize_bilinear_serial(const double* in, int ih, int iw, int c, double* out, int oh,
                            int ow);

} // namespace dba::kernels
