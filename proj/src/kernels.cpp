#include "pacnn/kernels.hpp"

#include <cmath>
#include <cstdint>

#include "pacnn/errors.hpp"

namespace pacnn {

namespace {

inline std::size_t idx3(int c, int y, int x, int h, int w) {
  return (static_cast<std::size_t>(c) * h + y) * w + x;
}

}  // namespace

int conv_out_extent(int in, int k, int stride, int pad) {
  if (in < 1 || k < 1 || stride < 1 || pad < 0) {
    throw ShapeError("invalid convolution geometry");
  }
  const int out = (in + 2 * pad - k) / stride + 1;
  if (out < 1 || in + 2 * pad < k) {
    throw ShapeError("convolution output would be empty");
  }
  return out;
}

void conv2d_forward(const double* in, int ic, int ih, int iw,
                    const double* w, const double* bias, int oc, int k,
                    int stride, int pad, double* out) {
  const int oh = conv_out_extent(ih, k, stride, pad);
  const int ow = conv_out_extent(iw, k, stride, pad);
#pragma omp parallel for collapse(2) schedule(static)
  for (int ocr = 0; ocr < oc; ++ocr) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias != nullptr ? bias[ocr] : 0.0;
        for (int icr = 0; icr < ic; ++icr) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= ih) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= iw) continue;
              acc += in[idx3(icr, iy, ix, ih, iw)] *
                     w[((static_cast<std::size_t>(ocr) * ic + icr) * k + ky) * k + kx];
            }
          }
        }
        out[idx3(ocr, oy, ox, oh, ow)] = acc;
      }
    }
  }
}

void conv2d_backward_input(const double* w, int ic, int ih, int iw, int oc,
                           int k, int stride, int pad, const double* gout,
                           double* gin) {
  const int oh = conv_out_extent(ih, k, stride, pad);
  const int ow = conv_out_extent(iw, k, stride, pad);
#pragma omp parallel for collapse(2) schedule(static)
  for (int icr = 0; icr < ic; ++icr) {
    for (int iy = 0; iy < ih; ++iy) {
      for (int ix = 0; ix < iw; ++ix) {
        double acc = 0.0;
        for (int ocr = 0; ocr < oc; ++ocr) {
          for (int ky = 0; ky < k; ++ky) {
            const int ny = iy + pad - ky;
            if (ny < 0 || ny % stride != 0) continue;
            const int oy = ny / stride;
            if (oy >= oh) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int nx = ix + pad - kx;
              if (nx < 0 || nx % stride != 0) continue;
              const int ox = nx / stride;
              if (ox >= ow) continue;
              acc += gout[idx3(ocr, oy, ox, oh, ow)] *
                     w[((static_cast<std::size_t>(ocr) * ic + icr) * k + ky) * k + kx];
            }
          }
        }
        gin[idx3(icr, iy, ix, ih, iw)] += acc;
      }
    }
  }
}

void conv2d_backward_params(const double* in, int ic, int ih, int iw, int oc,
                            int k, int stride, int pad, const double* gout,
                            double* gw, double* gb) {
  const int oh = conv_out_extent(ih, k, stride, pad);
  const int ow = conv_out_extent(iw, k, stride, pad);
  if (gw != nullptr) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int ocr = 0; ocr < oc; ++ocr) {
      for (int icr = 0; icr < ic; ++icr) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            double acc = 0.0;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= ih) continue;
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= iw) continue;
                acc += gout[idx3(ocr, oy, ox, oh, ow)] *
                       in[idx3(icr, iy, ix, ih, iw)];
              }
            }
            gw[((static_cast<std::size_t>(ocr) * ic + icr) * k + ky) * k + kx] += acc;
          }
        }
      }
    }
  }
  if (gb != nullptr) {
#pragma omp parallel for schedule(static)
    for (int ocr = 0; ocr < oc; ++ocr) {
      double acc = 0.0;
      const double* g = gout + static_cast<std::size_t>(ocr) * oh * ow;
      for (int i = 0; i < oh * ow; ++i) acc += g[i];
      gb[ocr] += acc;
    }
  }
}

void maxpool2x2_forward(const double* in, int c, int h, int w, double* out,
                        int* argmax) {
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2x2 requires even extents");
  }
  const int oh = h / 2, ow = w / 2;
#pragma omp parallel for collapse(2) schedule(static)
  for (int cr = 0; cr < c; ++cr) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        // First maximum in scan order wins ties.
        std::size_t best_i = idx3(cr, 2 * oy, 2 * ox, h, w);
        double best = in[best_i];
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t i = idx3(cr, 2 * oy + dy, 2 * ox + dx, h, w);
            if (in[i] > best) {
              best = in[i];
              best_i = i;
            }
          }
        }
        out[idx3(cr, oy, ox, oh, ow)] = best;
        argmax[idx3(cr, oy, ox, oh, ow)] = static_cast<int>(best_i);
      }
    }
  }
}

void maxpool2x2_backward(const int* argmax, const double* gout, int c, int oh,
                         int ow, double* gin) {
  // Pool windows are disjoint and each routes to one input, so parallel
  // writes never collide.
#pragma omp parallel for collapse(2) schedule(static)
  for (int cr = 0; cr < c; ++cr) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const std::size_t o = idx3(cr, oy, ox, oh, ow);
        gin[static_cast<std::size_t>(argmax[o])] += gout[o];
      }
    }
  }
}

namespace {

// Input row read by output row `oy` through kernel row `ky` (parity of
// oy + 1); out-of-range preimages clamp to the border (replicate padding).
inline int deconv_src(int oy, int ky, int extent) {
  const int raw = (oy + 1 - ky) / 2;  // oy + 1 - ky is even by construction
  return raw < 0 ? 0 : (raw >= extent ? extent - 1 : raw);
}

// (output, kernel) tap pairs that read a given input coordinate: the four
// regular preimages clipped to the output range, plus the clamped taps that
// fold onto the first and last coordinate.
struct DeconvTap {
  int o;
  int k;
};

inline int deconv_taps(int i, int extent, DeconvTap taps[6]) {
  int n = 0;
  for (int k = 0; k < 4; ++k) {
    const int o = 2 * i - 1 + k;
    if (o >= 0 && o < 2 * extent) taps[n++] = {o, k};
  }
  if (i == 0) taps[n++] = {0, 3};
  if (i == extent - 1) taps[n++] = {2 * extent - 1, 0};
  return n;
}

}  // namespace

void deconv2x_forward(const double* in, int ic, int ih, int iw,
                      const double* w, int oc, double* out) {
  const int oh = 2 * ih, ow = 2 * iw;
#pragma omp parallel for collapse(2) schedule(static)
  for (int ocr = 0; ocr < oc; ++ocr) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        // ky shares the parity of oy + 1; two taps per axis.
        for (int icr = 0; icr < ic; ++icr) {
          for (int ky = (oy + 1) % 2; ky < 4; ky += 2) {
            const int iy = deconv_src(oy, ky, ih);
            for (int kx = (ox + 1) % 2; kx < 4; kx += 2) {
              const int ix = deconv_src(ox, kx, iw);
              acc += in[idx3(icr, iy, ix, ih, iw)] *
                     w[((static_cast<std::size_t>(icr) * oc + ocr) * 4 + ky) * 4 + kx];
            }
          }
        }
        out[idx3(ocr, oy, ox, oh, ow)] = acc;
      }
    }
  }
}

void deconv2x_backward_input(const double* w, int ic, int ih, int iw, int oc,
                             const double* gout, double* gin) {
  const int oh = 2 * ih;
  const int ow = 2 * iw;
#pragma omp parallel for collapse(2) schedule(static)
  for (int icr = 0; icr < ic; ++icr) {
    for (int iy = 0; iy < ih; ++iy) {
      DeconvTap ty[6];
      const int nty = deconv_taps(iy, ih, ty);
      for (int ix = 0; ix < iw; ++ix) {
        DeconvTap tx[6];
        const int ntx = deconv_taps(ix, iw, tx);
        double acc = 0.0;
        for (int ocr = 0; ocr < oc; ++ocr) {
          for (int a = 0; a < nty; ++a) {
            for (int b = 0; b < ntx; ++b) {
              acc += gout[idx3(ocr, ty[a].o, tx[b].o, oh, ow)] *
                     w[((static_cast<std::size_t>(icr) * oc + ocr) * 4 + ty[a].k) * 4 +
                       tx[b].k];
            }
          }
        }
        gin[idx3(icr, iy, ix, ih, iw)] += acc;
      }
    }
  }
}

void deconv2x_backward_weights(const double* in, int ic, int ih, int iw,
                               int oc, const double* gout, double* gw) {
  const int oh = 2 * ih, ow = 2 * iw;
#pragma omp parallel for collapse(2) schedule(static)
  for (int icr = 0; icr < ic; ++icr) {
    for (int ocr = 0; ocr < oc; ++ocr) {
      for (int ky = 0; ky < 4; ++ky) {
        for (int kx = 0; kx < 4; ++kx) {
          double acc = 0.0;
          for (int oy = (ky + 1) % 2; oy < oh; oy += 2) {
            const int iy = deconv_src(oy, ky, ih);
            for (int ox = (kx + 1) % 2; ox < ow; ox += 2) {
              const int ix = deconv_src(ox, kx, iw);
              acc += in[idx3(icr, iy, ix, ih, iw)] *
                     gout[idx3(ocr, oy, ox, oh, ow)];
            }
          }
          gw[((static_cast<std::size_t>(icr) * oc + ocr) * 4 + ky) * 4 + kx] += acc;
        }
      }
    }
  }
}

void relu_forward(const double* x, std::size_t n, double* y) {
  const std::int64_t m = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* gy, std::size_t n,
                   double* gx) {
  const std::int64_t m = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) {
    if (x[i] > 0.0) gx[i] += gy[i];
  }
}

void softplus_forward(const double* x, std::size_t n, double* y) {
  const std::int64_t m = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) {
    const double v = x[i];
    y[i] = (v > 0.0 ? v : 0.0) + std::log1p(std::exp(-std::abs(v)));
  }
}

void softplus_backward(const double* x, const double* gy, std::size_t n,
                       double* gx) {
  const std::int64_t m = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) gx[i] += gy[i] * sigmoid(x[i]);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void pa_weight_forward(const double* p, std::size_t n, double alpha,
                       double beta, double* w) {
  const std::int64_t m = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) w[i] = sigmoid(alpha * (p[i] - beta));
}

void pa_mix_forward(const double* fine, const double* coarse, const double* w,
                    std::size_t n, double* out) {
  const std::int64_t m = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) {
    out[i] = w[i] * fine[i] + (1.0 - w[i]) * coarse[i];
  }
}

PaScalarGrads pa_backward(const double* fine, const double* coarse,
                          const double* p, const double* w,
                          const double* gout, std::size_t n, double alpha,
                          double beta, double* gfine, double* gcoarse,
                          double* gp) {
  const std::int64_t m = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) {
    const double g = gout[i];
    const double wi = w[i];
    const double ww = wi * (1.0 - wi);
    if (gfine != nullptr) gfine[i] += g * wi;
    if (gcoarse != nullptr) gcoarse[i] += g * (1.0 - wi);
    if (gp != nullptr) gp[i] += g * alpha * ww * (fine[i] - coarse[i]);
  }
  // Scalar reductions accumulate serially for thread-count independence.
  PaScalarGrads s;
  for (std::int64_t i = 0; i < m; ++i) {
    const double g = gout[i];
    const double ww = w[i] * (1.0 - w[i]);
    const double diff = fine[i] - coarse[i];
    s.alpha += g * diff * (p[i] - beta) * ww;
    s.beta += g * diff * (-alpha) * ww;
  }
  return s;
}

void fill(double* x, std::size_t n, double v) {
  const std::int64_t m = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) x[i] = v;
}

void add_scaled(double* dst, const double* src, double s, std::size_t n) {
  const std::int64_t m = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) dst[i] += s * src[i];
}

}  // namespace pacnn
