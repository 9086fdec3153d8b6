// Times the parallel kernels against the serial references on layer shapes
// the model actually runs, and cross-checks their outputs while at it.
// PACNN_THREADS controls the parallel side.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "pacnn/kernels.hpp"
#include "pacnn/kernels_ref.hpp"
#include "pacnn/rng.hpp"
#include "pacnn/threads.hpp"

namespace {

using pacnn::Rng;

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(
             clock::now().time_since_epoch())
      .count();
}

template <typename F>
double time_ms(int reps, F&& f) {
  f();  // warm up and materialize pages
  const double t0 = now_ms();
  for (int i = 0; i < reps; ++i) f();
  return (now_ms() - t0) / reps;
}

double max_abs_diff(const std::vector<double>& a,
                    const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

void fill(Rng& rng, std::vector<double>& v) {
  for (double& x : v) x = rng.normal(0.0, 1.0);
}

struct ConvShape {
  const char* label;
  int ic, ih, iw, oc;
};

void bench_conv(const ConvShape& s, int reps) {
  Rng rng(7);
  const int k = 3, stride = 1, pad = 1;
  const int oh = pacnn::conv_out_extent(s.ih, k, stride, pad);
  const int ow = pacnn::conv_out_extent(s.iw, k, stride, pad);
  std::vector<double> in(static_cast<std::size_t>(s.ic) * s.ih * s.iw),
      w(static_cast<std::size_t>(s.oc) * s.ic * k * k), b(s.oc),
      gout(static_cast<std::size_t>(s.oc) * oh * ow);
  fill(rng, in);
  fill(rng, w);
  fill(rng, b);
  fill(rng, gout);
  std::vector<double> out_par(gout.size()), out_ref(gout.size());
  std::vector<double> gin_par(in.size()), gin_ref(in.size());
  std::vector<double> gw_par(w.size()), gw_ref(w.size()), gb_par(b.size()),
      gb_ref(b.size());

  const double fwd_par = time_ms(reps, [&] {
    pacnn::conv2d_forward(in.data(), s.ic, s.ih, s.iw, w.data(), b.data(),
                          s.oc, k, stride, pad, out_par.data());
  });
  const double fwd_ref = time_ms(reps, [&] {
    pacnn::ref::conv2d_forward(in.data(), s.ic, s.ih, s.iw, w.data(),
                               b.data(), s.oc, k, stride, pad,
                               out_ref.data());
  });
  const double bwd_par = time_ms(reps, [&] {
    std::fill(gin_par.begin(), gin_par.end(), 0.0);
    std::fill(gw_par.begin(), gw_par.end(), 0.0);
    std::fill(gb_par.begin(), gb_par.end(), 0.0);
    pacnn::conv2d_backward_input(w.data(), s.ic, s.ih, s.iw, s.oc, k, stride,
                                 pad, gout.data(), gin_par.data());
    pacnn::conv2d_backward_params(in.data(), s.ic, s.ih, s.iw, s.oc, k,
                                  stride, pad, gout.data(), gw_par.data(),
                                  gb_par.data());
  });
  const double bwd_ref = time_ms(reps, [&] {
    std::fill(gin_ref.begin(), gin_ref.end(), 0.0);
    std::fill(gw_ref.begin(), gw_ref.end(), 0.0);
    std::fill(gb_ref.begin(), gb_ref.end(), 0.0);
    pacnn::ref::conv2d_backward_input(w.data(), s.ic, s.ih, s.iw, s.oc, k,
                                      stride, pad, gout.data(),
                                      gin_ref.data());
    pacnn::ref::conv2d_backward_params(in.data(), s.ic, s.ih, s.iw, s.oc, k,
                                       stride, pad, gout.data(),
                                       gw_ref.data(), gb_ref.data());
  });
  const double diff =
      std::max({max_abs_diff(out_par, out_ref), max_abs_diff(gin_par, gin_ref),
                max_abs_diff(gw_par, gw_ref), max_abs_diff(gb_par, gb_ref)});
  std::printf(
      "conv3x3 %-18s fwd %8.3f ms (ref %8.3f, x%.2f)   bwd %8.3f ms "
      "(ref %8.3f, x%.2f)   max|diff| %.1e\n",
      s.label, fwd_par, fwd_ref, fwd_ref / fwd_par, bwd_par, bwd_ref,
      bwd_ref / bwd_par, diff);
}

void bench_deconv(int ic, int oc, int ih, int iw, int reps) {
  Rng rng(9);
  std::vector<double> in(static_cast<std::size_t>(ic) * ih * iw),
      w(static_cast<std::size_t>(ic) * oc * 4 * 4),
      gout(static_cast<std::size_t>(oc) * ih * 2 * iw * 2);
  fill(rng, in);
  fill(rng, w);
  fill(rng, gout);
  std::vector<double> out_par(gout.size()), out_ref(gout.size()),
      gin_par(in.size()), gin_ref(in.size()), gw_par(w.size()),
      gw_ref(w.size());

  const double fwd_par = time_ms(reps, [&] {
    pacnn::deconv2x_forward(in.data(), ic, ih, iw, w.data(), oc,
                            out_par.data());
  });
  const double fwd_ref = time_ms(reps, [&] {
    pacnn::ref::deconv2x_forward(in.data(), ic, ih, iw, w.data(), oc,
                                 out_ref.data());
  });
  const double bwd_par = time_ms(reps, [&] {
    std::fill(gin_par.begin(), gin_par.end(), 0.0);
    std::fill(gw_par.begin(), gw_par.end(), 0.0);
    pacnn::deconv2x_backward_input(w.data(), ic, ih, iw, oc, gout.data(),
                                   gin_par.data());
    pacnn::deconv2x_backward_weights(in.data(), ic, ih, iw, oc, gout.data(),
                                     gw_par.data());
  });
  const double bwd_ref = time_ms(reps, [&] {
    std::fill(gin_ref.begin(), gin_ref.end(), 0.0);
    std::fill(gw_ref.begin(), gw_ref.end(), 0.0);
    pacnn::ref::deconv2x_backward_input(w.data(), ic, ih, iw, oc, gout.data(),
                                        gin_ref.data());
    pacnn::ref::deconv2x_backward_weights(in.data(), ic, ih, iw, oc,
                                          gout.data(), gw_ref.data());
  });
  const double diff =
      std::max({max_abs_diff(out_par, out_ref), max_abs_diff(gin_par, gin_ref),
                max_abs_diff(gw_par, gw_ref)});
  std::printf(
      "deconv4x4x2 %dx%dx%d->%d     fwd %8.3f ms (ref %8.3f, x%.2f)   bwd "
      "%8.3f ms (ref %8.3f, x%.2f)   max|diff| %.1e\n",
      ic, ih, iw, oc, fwd_par, fwd_ref, fwd_ref / fwd_par, bwd_par, bwd_ref,
      bwd_ref / bwd_par, diff);
}

void bench_pool(int c, int h, int w, int reps) {
  Rng rng(11);
  std::vector<double> in(static_cast<std::size_t>(c) * h * w),
      out_par(in.size() / 4), out_ref(in.size() / 4);
  std::vector<int> arg_par(out_par.size()), arg_ref(out_ref.size());
  fill(rng, in);
  const double par = time_ms(reps, [&] {
    pacnn::maxpool2x2_forward(in.data(), c, h, w, out_par.data(),
                              arg_par.data());
  });
  const double ref = time_ms(reps, [&] {
    pacnn::ref::maxpool2x2_forward(in.data(), c, h, w, out_ref.data(),
                                   arg_ref.data());
  });
  std::printf(
      "maxpool2x2 %dx%dx%d        fwd %8.3f ms (ref %8.3f, x%.2f)   "
      "max|diff| %.1e\n",
      c, h, w, par, ref, ref / par, max_abs_diff(out_par, out_ref));
}

}  // namespace

int main() {
  const int threads = pacnn::init_threads_from_env();
  std::printf("threads: %d\n\n", threads);

  // VGG-ish trunk shapes for a 256x256 input, plus the tiny branch layers.
  bench_conv({"64x256x256 -> 64", 64, 256, 256, 64}, 3);
  bench_conv({"128x128x128 -> 128", 128, 128, 128, 128}, 3);
  bench_conv({"256x64x64 -> 256", 256, 64, 64, 256}, 3);
  bench_conv({"512x32x32 -> 512", 512, 32, 32, 512}, 3);
  bench_conv({"512x16x16 -> 512", 512, 16, 16, 512}, 5);
  std::printf("\n");
  bench_deconv(1, 1, 32, 32, 20);
  bench_deconv(512, 512, 16, 16, 3);
  std::printf("\n");
  bench_pool(64, 256, 256, 10);
  bench_pool(512, 32, 32, 10);
  return 0;
}
