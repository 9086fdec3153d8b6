#pragma once

#include <cstddef>

namespace pacnn {

// Dense layer arithmetic on raw row-major buffers.
//
// Layouts:
//   feature maps     (c, h, w), c-major
//   conv weights     (out_ch, in_ch, k, k), out_ch-major
//   deconv weights   (in_ch, out_ch, 4, 4), in_ch-major
// Convolution is cross-correlation (no kernel flip). Forward functions
// overwrite their output; backward functions accumulate (+=) into gradient
// buffers, so callers zero them once per pass.
//
// Every parallel loop ranges over independent output elements with a fixed
// inner accumulation order, so results are bit-identical for any OpenMP
// thread count.

int conv_out_extent(int in, int k, int stride, int pad);

void conv2d_forward(const double* in, int ic, int ih, int iw,
                    const double* w, const double* bias, int oc, int k,
                    int stride, int pad, double* out);

void conv2d_backward_input(const double* w, int ic, int ih, int iw, int oc,
                           int k, int stride, int pad, const double* gout,
                           double* gin);

void conv2d_backward_params(const double* in, int ic, int ih, int iw, int oc,
                            int k, int stride, int pad, const double* gout,
                            double* gw, double* gb);

// 2x2 max pooling, stride 2. h and w must be even. argmax stores the
// absolute input index of each window's first maximum (scan order y, x).
void maxpool2x2_forward(const double* in, int c, int h, int w, double* out,
                        int* argmax);

void maxpool2x2_backward(const int* argmax, const double* gout, int c, int oh,
                         int ow, double* gin);

// Transposed convolution, kernel 4, stride 2, pad 1: exact 2x upsampling.
// Out-of-range taps clamp to the border pixel (replicate padding), so every
// output draws on a full 2x2 tap set per axis. With the separable weights
// (1/4, 3/4, 3/4, 1/4) x (same) this reproduces bilinear interpolation and
// maps a constant input to the same constant at every pixel, borders
// included.
void deconv2x_forward(const double* in, int ic, int ih, int iw,
                      const double* w, int oc, double* out);

void deconv2x_backward_input(const double* w, int ic, int ih, int iw, int oc,
                             const double* gout, double* gin);

void deconv2x_backward_weights(const double* in, int ic, int ih, int iw,
                               int oc, const double* gout, double* gw);

void relu_forward(const double* x, std::size_t n, double* y);
void relu_backward(const double* x, const double* gy, std::size_t n,
                   double* gx);

// Numerically stable log(1 + exp(x)); gradient is the logistic sigmoid.
void softplus_forward(const double* x, std::size_t n, double* y);
void softplus_backward(const double* x, const double* gy, std::size_t n,
                       double* gx);

double sigmoid(double x);

// Perspective-aware weighting: w = sigmoid(alpha * (p - beta)),
// out = w * fine + (1 - w) * coarse.
void pa_weight_forward(const double* p, std::size_t n, double alpha,
                       double beta, double* w);

void pa_mix_forward(const double* fine, const double* coarse, const double* w,
                    std::size_t n, double* out);

struct PaScalarGrads {
  double alpha = 0.0;
  double beta = 0.0;
};

// Backward of the weighting: map gradients accumulate into gfine, gcoarse,
// gp; the two scalar parameter gradients are returned. Any of the gradient
// pointers may be null to skip that output.
PaScalarGrads pa_backward(const double* fine, const double* coarse,
                          const double* p, const double* w,
                          const double* gout, std::size_t n, double alpha,
                          double beta, double* gfine, double* gcoarse,
                          double* gp);

void fill(double* x, std::size_t n, double v);
void add_scaled(double* dst, const double* src, double s, std::size_t n);

// Naive single-threaded references with independent loop structure, kept
// for correctness tests and as the baseline in the benchmark tool.
namespace ref {

void conv2d_forward(const double* in, int ic, int ih, int iw,
                    const double* w, const double* bias, int oc, int k,
                    int stride, int pad, double* out);

void conv2d_backward_input(const double* w, int ic, int ih, int iw, int oc,
                           int k, int stride, int pad, const double* gout,
                           double* gin);

void conv2d_backward_params(const double* in, int ic, int ih, int iw, int oc,
                            int k, int stride, int pad, const double* gout,
                            double* gw, double* gb);

void maxpool2x2_forward(const double* in, int c, int h, int w, double* out,
                        int* argmax);

void deconv2x_forward(const double* in, int ic, int ih, int iw,
                      const double* w, int oc, double* out);

void deconv2x_backward_input(const double* w, int ic, int ih, int iw, int oc,
                             const double* gout, double* gin);

void deconv2x_backward_weights(const double* in, int ic, int ih, int iw,
                               int oc, const double* gout, double* gw);

}  // namespace ref

}  // namespace pacnn
