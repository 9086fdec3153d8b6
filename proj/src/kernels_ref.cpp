#include <cstddef>

#include "pacnn/errors.hpp"
#include "pacnn/kernels.hpp"

// Scatter-order loops, deliberately structured differently from the
// parallel kernels so agreement between the two is a real check.

namespace pacnn {
namespace ref {

namespace {

inline std::size_t idx3(int c, int y, int x, int h, int w) {
  return (static_cast<std::size_t>(c) * h + y) * w + x;
}

inline std::size_t widx(int a, int b, int nb, int ky, int kx, int k) {
  return ((static_cast<std::size_t>(a) * nb + b) * k + ky) * k + kx;
}

}  // namespace

void conv2d_forward(const double* in, int ic, int ih, int iw,
                    const double* w, const double* bias, int oc, int k,
                    int stride, int pad, double* out) {
  const int oh = conv_out_extent(ih, k, stride, pad);
  const int ow = conv_out_extent(iw, k, stride, pad);
  for (int ocr = 0; ocr < oc; ++ocr) {
    for (int i = 0; i < oh * ow; ++i) {
      out[static_cast<std::size_t>(ocr) * oh * ow + i] =
          bias != nullptr ? bias[ocr] : 0.0;
    }
  }
  for (int icr = 0; icr < ic; ++icr) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int ocr = 0; ocr < oc; ++ocr) {
          const double wv = w[widx(ocr, icr, ic, ky, kx, k)];
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= ih) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= iw) continue;
              out[idx3(ocr, oy, ox, oh, ow)] +=
                  wv * in[idx3(icr, iy, ix, ih, iw)];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const double* w, int ic, int ih, int iw, int oc,
                           int k, int stride, int pad, const double* gout,
                           double* gin) {
  const int oh = conv_out_extent(ih, k, stride, pad);
  const int ow = conv_out_extent(iw, k, stride, pad);
  for (int ocr = 0; ocr < oc; ++ocr) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double g = gout[idx3(ocr, oy, ox, oh, ow)];
        for (int icr = 0; icr < ic; ++icr) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= ih) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= iw) continue;
              gin[idx3(icr, iy, ix, ih, iw)] +=
                  g * w[widx(ocr, icr, ic, ky, kx, k)];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_params(const double* in, int ic, int ih, int iw, int oc,
                            int k, int stride, int pad, const double* gout,
                            double* gw, double* gb) {
  const int oh = conv_out_extent(ih, k, stride, pad);
  const int ow = conv_out_extent(iw, k, stride, pad);
  for (int ocr = 0; ocr < oc; ++ocr) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double g = gout[idx3(ocr, oy, ox, oh, ow)];
        if (gb != nullptr) gb[ocr] += g;
        if (gw == nullptr) continue;
        for (int icr = 0; icr < ic; ++icr) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= ih) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= iw) continue;
              gw[widx(ocr, icr, ic, ky, kx, k)] +=
                  g * in[idx3(icr, iy, ix, ih, iw)];
            }
          }
        }
      }
    }
  }
}

void maxpool2x2_forward(const double* in, int c, int h, int w, double* out,
                        int* argmax) {
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2x2 requires even extents");
  }
  const int oh = h / 2, ow = w / 2;
  for (int cr = 0; cr < c; ++cr) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
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

namespace {

// Replicate-clamped source coordinate; mirrors the parallel kernel's
// boundary rule through a different control flow (parity tests instead of
// stepped loops).
inline int clamp_src(int o, int k, int extent, bool& used) {
  const int n = o + 1 - k;
  used = (n % 2 == 0);
  if (!used) return 0;
  int raw = n / 2;
  if (raw < 0) raw = 0;
  if (raw >= extent) raw = extent - 1;
  return raw;
}

}  // namespace

void deconv2x_forward(const double* in, int ic, int ih, int iw,
                      const double* w, int oc, double* out) {
  const int oh = 2 * ih, ow = 2 * iw;
  for (int i = 0; i < oc * oh * ow; ++i) out[i] = 0.0;
  for (int ocr = 0; ocr < oc; ++ocr) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int icr = 0; icr < ic; ++icr) {
          for (int ky = 0; ky < 4; ++ky) {
            bool uy = false;
            const int iy = clamp_src(oy, ky, ih, uy);
            if (!uy) continue;
            for (int kx = 0; kx < 4; ++kx) {
              bool ux = false;
              const int ix = clamp_src(ox, kx, iw, ux);
              if (!ux) continue;
              out[idx3(ocr, oy, ox, oh, ow)] +=
                  in[idx3(icr, iy, ix, ih, iw)] *
                  w[widx(icr, ocr, oc, ky, kx, 4)];
            }
          }
        }
      }
    }
  }
}

void deconv2x_backward_input(const double* w, int ic, int ih, int iw, int oc,
                             const double* gout, double* gin) {
  const int oh = 2 * ih, ow = 2 * iw;
  for (int ocr = 0; ocr < oc; ++ocr) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double g = gout[idx3(ocr, oy, ox, oh, ow)];
        for (int icr = 0; icr < ic; ++icr) {
          for (int ky = 0; ky < 4; ++ky) {
            bool uy = false;
            const int iy = clamp_src(oy, ky, ih, uy);
            if (!uy) continue;
            for (int kx = 0; kx < 4; ++kx) {
              bool ux = false;
              const int ix = clamp_src(ox, kx, iw, ux);
              if (!ux) continue;
              gin[idx3(icr, iy, ix, ih, iw)] +=
                  g * w[widx(icr, ocr, oc, ky, kx, 4)];
            }
          }
        }
      }
    }
  }
}

void deconv2x_backward_weights(const double* in, int ic, int ih, int iw,
                               int oc, const double* gout, double* gw) {
  const int oh = 2 * ih, ow = 2 * iw;
  for (int ocr = 0; ocr < oc; ++ocr) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double g = gout[idx3(ocr, oy, ox, oh, ow)];
        for (int icr = 0; icr < ic; ++icr) {
          for (int ky = 0; ky < 4; ++ky) {
            bool uy = false;
            const int iy = clamp_src(oy, ky, ih, uy);
            if (!uy) continue;
            for (int kx = 0; kx < 4; ++kx) {
              bool ux = false;
              const int ix = clamp_src(ox, kx, iw, ux);
              if (!ux) continue;
              gw[widx(icr, ocr, oc, ky, kx, 4)] +=
                  g * in[idx3(icr, iy, ix, ih, iw)];
            }
          }
        }
      }
    }
  }
}

}  // namespace ref
}  // namespace pacnn
