#pragma once

namespace pacnn {
namespace ref {

// Serial reference implementations of the layer kernels, written with a
// different loop structure (scatter order) than the parallel versions so
// that agreement between the two is a meaningful check. Contracts and
// layouts match the declarations in kernels.hpp; pool backward is omitted
// because argmax replay has only one sensible implementation. The
// benchmark tool reports their cost side by side.

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
