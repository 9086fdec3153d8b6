#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "pacnn/grad_check.hpp"
#include "pacnn/kernels.hpp"
#include "pacnn/rng.hpp"
#include "pacnn/value_map.hpp"

using namespace pacnn;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed,
                               double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("conv output extent") {
  CHECK(conv_out_extent(8, 3, 1, 1) == 8);
  CHECK(conv_out_extent(8, 3, 1, 0) == 6);
  CHECK(conv_out_extent(9, 3, 2, 1) == 5);
  CHECK(conv_out_extent(1, 1, 1, 0) == 1);
}

TEST_CASE("one by one convolution is a channel mix") {
  // 2 in, 1 out, k=1: out = 2*a - 3*b + 0.5 everywhere.
  const int h = 3, w = 4;
  std::vector<double> in(2 * h * w);
  for (int i = 0; i < h * w; ++i) {
    in[static_cast<std::size_t>(i)] = 0.1 * i;            // channel a
    in[static_cast<std::size_t>(h * w + i)] = 1.0 - 0.05 * i;  // channel b
  }
  const std::vector<double> wgt = {2.0, -3.0};
  const std::vector<double> bias = {0.5};
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  conv2d_forward(in.data(), 2, h, w, wgt.data(), bias.data(), 1, 1, 1, 0,
                 out.data());
  for (int i = 0; i < h * w; ++i) {
    const double want = 2.0 * in[static_cast<std::size_t>(i)] -
                        3.0 * in[static_cast<std::size_t>(h * w + i)] + 0.5;
    CHECK(out[static_cast<std::size_t>(i)] == doctest::Approx(want).epsilon(1e-15));
  }
}

TEST_CASE("zero input leaves only the bias") {
  std::vector<double> in(1 * 5 * 5, 0.0);
  const auto wgt = random_vec(2 * 1 * 3 * 3, 42);
  const std::vector<double> bias = {1.25, -0.75};
  std::vector<double> out(2 * 5 * 5);
  conv2d_forward(in.data(), 1, 5, 5, wgt.data(), bias.data(), 2, 3, 1, 1,
                 out.data());
  for (int i = 0; i < 25; ++i) {
    CHECK(out[static_cast<std::size_t>(i)] == 1.25);
    CHECK(out[static_cast<std::size_t>(25 + i)] == -0.75);
  }
}

TEST_CASE("convolution gradients match finite differences") {
  struct Shape {
    int ic, ih, iw, oc, k, stride, pad;
  };
  for (const Shape s : {Shape{2, 6, 5, 3, 3, 1, 1}, Shape{3, 5, 5, 2, 1, 1, 0},
                        Shape{1, 7, 6, 2, 3, 2, 1}}) {
    const int oh = conv_out_extent(s.ih, s.k, s.stride, s.pad);
    const int ow = conv_out_extent(s.iw, s.k, s.stride, s.pad);
    auto in = random_vec(static_cast<std::size_t>(s.ic) * s.ih * s.iw, 7);
    auto wgt = random_vec(static_cast<std::size_t>(s.oc) * s.ic * s.k * s.k, 8);
    auto bias = random_vec(static_cast<std::size_t>(s.oc), 9);
    // Fixed linear readout makes the scalar loss sensitive to every output.
    const auto readout =
        random_vec(static_cast<std::size_t>(s.oc) * oh * ow, 10);

    const auto loss = [&]() {
      std::vector<double> out(readout.size());
      conv2d_forward(in.data(), s.ic, s.ih, s.iw, wgt.data(), bias.data(),
                     s.oc, s.k, s.stride, s.pad, out.data());
      double l = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) l += out[i] * readout[i];
      return l;
    };

    std::vector<double> gin(in.size(), 0.0), gw(wgt.size(), 0.0),
        gb(bias.size(), 0.0);
    conv2d_backward_input(wgt.data(), s.ic, s.ih, s.iw, s.oc, s.k, s.stride,
                          s.pad, readout.data(), gin.data());
    conv2d_backward_params(in.data(), s.ic, s.ih, s.iw, s.oc, s.k, s.stride,
                           s.pad, readout.data(), gw.data(), gb.data());

    const GradCheckReport rep = finite_difference_check(
        loss, {{"in", in.data(), gin.data(), in.size()},
               {"w", wgt.data(), gw.data(), wgt.size()},
               {"b", bias.data(), gb.data(), bias.size()}},
        1e-5);
    CHECK(rep.all_finite);
    CHECK(rep.max_rel_err <= 1e-6);
  }
}

TEST_CASE("backward accumulates instead of overwriting") {
  const auto wgt = random_vec(1 * 1 * 3 * 3, 3);
  const auto gout = random_vec(4 * 4, 4);
  std::vector<double> gin_once(4 * 4, 0.0);
  conv2d_backward_input(wgt.data(), 1, 4, 4, 1, 3, 1, 1, gout.data(),
                        gin_once.data());
  std::vector<double> gin_twice(gin_once);
  conv2d_backward_input(wgt.data(), 1, 4, 4, 1, 3, 1, 1, gout.data(),
                        gin_twice.data());
  for (std::size_t i = 0; i < gin_once.size(); ++i) {
    CHECK(gin_twice[i] == doctest::Approx(2.0 * gin_once[i]).epsilon(1e-12));
  }
}

TEST_CASE("maxpool picks the window maximum") {
  const std::vector<double> in = {1.0, 2.0, 3.0, 4.0};
  std::vector<double> out(1);
  std::vector<int> arg(1);
  maxpool2x2_forward(in.data(), 1, 2, 2, out.data(), arg.data());
  CHECK(out[0] == 4.0);
  CHECK(arg[0] == 3);

  // Ties go to the first element in scan order.
  const std::vector<double> flat = {5.0, 5.0, 5.0, 5.0};
  maxpool2x2_forward(flat.data(), 1, 2, 2, out.data(), arg.data());
  CHECK(out[0] == 5.0);
  CHECK(arg[0] == 0);
}

TEST_CASE("maxpool backward routes gradient to the argmax") {
  const std::vector<double> in = {1.0, 2.0, 3.0, 4.0, 8.0, 7.0, 6.0, 5.0,
                                  1.0, 3.0, 2.0, 4.0, 5.0, 6.0, 8.0, 7.0};
  std::vector<double> out(4);
  std::vector<int> arg(4);
  maxpool2x2_forward(in.data(), 1, 4, 4, out.data(), arg.data());
  const std::vector<double> gout = {10.0, 20.0, 30.0, 40.0};
  std::vector<double> gin(16, 0.0);
  maxpool2x2_backward(arg.data(), gout.data(), 1, 2, 2, gin.data());
  double total = 0.0;
  for (std::size_t i = 0; i < gin.size(); ++i) {
    total += gin[i];
    if (gin[i] != 0.0) {
      // Every gradient cell must sit on its window's maximum.
      CHECK(in[i] == out[std::find(arg.begin(), arg.end(), static_cast<int>(i)) -
                         arg.begin()]);
    }
  }
  CHECK(total == 100.0);  // mass conserved
}

TEST_CASE("maxpool gradient matches finite differences away from ties") {
  // A shuffled integer grid has distinct window entries, so the argmax is
  // stable under probing and the pool is locally linear.
  std::vector<double> in = {12, 3,  7,  14, 1,  9,  15, 6,
                            4,  11, 2,  13, 10, 5,  8,  0};
  const auto readout = random_vec(4, 21);
  const auto loss = [&]() {
    std::vector<double> out(4);
    std::vector<int> arg(4);
    maxpool2x2_forward(in.data(), 1, 4, 4, out.data(), arg.data());
    double l = 0.0;
    for (int i = 0; i < 4; ++i) {
      l += out[static_cast<std::size_t>(i)] * readout[static_cast<std::size_t>(i)];
    }
    return l;
  };
  std::vector<double> out(4);
  std::vector<int> arg(4);
  maxpool2x2_forward(in.data(), 1, 4, 4, out.data(), arg.data());
  std::vector<double> gin(16, 0.0);
  maxpool2x2_backward(arg.data(), readout.data(), 1, 2, 2, gin.data());
  const GradCheckReport rep = finite_difference_check(
      loss, {{"in", in.data(), gin.data(), in.size()}}, 1e-5);
  CHECK(rep.max_rel_err <= 1e-7);
}

TEST_CASE("bilinear deconv maps constants to constants") {
  // Separable taps (1/4, 3/4, 3/4, 1/4): rows of the 4x4 kernel.
  std::vector<double> wgt(16);
  const double t[4] = {0.25, 0.75, 0.75, 0.25};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) wgt[static_cast<std::size_t>(4 * i + j)] = t[i] * t[j];
  }
  std::vector<double> in(3 * 5, 2.5);
  std::vector<double> out(6 * 10);
  deconv2x_forward(in.data(), 1, 3, 5, wgt.data(), 1, out.data());
  for (const double v : out) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("deconv doubles both extents") {
  const auto in = random_vec(2 * 4 * 6, 31);
  const auto wgt = random_vec(2 * 3 * 16, 32);
  std::vector<double> out(3 * 8 * 12, -1.0);
  deconv2x_forward(in.data(), 2, 4, 6, wgt.data(), 3, out.data());
  double sum = 0.0;
  for (const double v : out) sum += std::abs(v);
  CHECK(sum > 0.0);  // every cell written; shape arithmetic is 2x exactly
}

TEST_CASE("deconv gradients match finite differences") {
  auto in = random_vec(2 * 3 * 4, 51);
  auto wgt = random_vec(2 * 2 * 16, 52);
  const auto readout = random_vec(2 * 6 * 8, 53);
  const auto loss = [&]() {
    std::vector<double> out(readout.size());
    deconv2x_forward(in.data(), 2, 3, 4, wgt.data(), 2, out.data());
    double l = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) l += out[i] * readout[i];
    return l;
  };
  std::vector<double> gin(in.size(), 0.0), gw(wgt.size(), 0.0);
  deconv2x_backward_input(wgt.data(), 2, 3, 4, 2, readout.data(), gin.data());
  deconv2x_backward_weights(in.data(), 2, 3, 4, 2, readout.data(), gw.data());
  const GradCheckReport rep = finite_difference_check(
      loss, {{"in", in.data(), gin.data(), in.size()},
             {"w", wgt.data(), gw.data(), wgt.size()}},
      1e-5);
  CHECK(rep.all_finite);
  CHECK(rep.max_rel_err <= 1e-6);
}

TEST_CASE("relu and softplus match their scalar definitions and gradients") {
  auto x = random_vec(64, 61, -3.0, 3.0);
  x[0] = 0.0;  // kink sits exactly at zero; definition check only
  std::vector<double> y(x.size());

  relu_forward(x.data(), x.size(), y.data());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(y[i] == std::max(0.0, x[i]));
  }

  softplus_forward(x.data(), x.size(), y.data());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(y[i] == doctest::Approx(std::log1p(std::exp(x[i]))).epsilon(1e-12));
  }

  // Softplus is smooth everywhere, so FD applies to all elements.
  const auto readout = random_vec(x.size(), 62);
  const auto loss = [&]() {
    std::vector<double> out(x.size());
    softplus_forward(x.data(), x.size(), out.data());
    double l = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) l += out[i] * readout[i];
    return l;
  };
  std::vector<double> gx(x.size(), 0.0);
  softplus_backward(x.data(), readout.data(), x.size(), gx.data());
  const GradCheckReport rep = finite_difference_check(
      loss, {{"x", x.data(), gx.data(), x.size()}}, 1e-5);
  CHECK(rep.max_rel_err <= 1e-7);

  // Extremes stay finite and saturate to the identity / zero map.
  const double big[2] = {700.0, -700.0};
  double sy[2];
  softplus_forward(big, 2, sy);
  CHECK(sy[0] == doctest::Approx(700.0).epsilon(1e-12));
  CHECK(sy[1] >= 0.0);
  CHECK(sy[1] <= 1e-300);
}

TEST_CASE("pa weighting matches the scalar formula") {
  const auto p = random_vec(40, 71, 0.1, 3.0);
  const double alpha = 1.7, beta = 0.9;
  std::vector<double> w(p.size());
  pa_weight_forward(p.data(), p.size(), alpha, beta, w.data());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double want = 1.0 / (1.0 + std::exp(-alpha * (p[i] - beta)));
    CHECK(w[i] == doctest::Approx(want).epsilon(1e-12));
    CHECK(w[i] == doctest::Approx(sigmoid(alpha * (p[i] - beta))).epsilon(1e-15));
  }

  const auto fine = random_vec(p.size(), 72);
  const auto coarse = random_vec(p.size(), 73);
  std::vector<double> out(p.size());
  pa_mix_forward(fine.data(), coarse.data(), w.data(), p.size(), out.data());
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(out[i] ==
          doctest::Approx(w[i] * fine[i] + (1.0 - w[i]) * coarse[i]).epsilon(1e-12));
  }
}

TEST_CASE("pa backward matches finite differences including the scalars") {
  auto fine = random_vec(24, 81);
  auto coarse = random_vec(24, 82);
  auto p = random_vec(24, 83, 0.2, 2.0);
  double alpha = 1.3, beta = 0.8;
  const auto readout = random_vec(24, 84);

  const auto loss = [&]() {
    std::vector<double> w(p.size()), out(p.size());
    pa_weight_forward(p.data(), p.size(), alpha, beta, w.data());
    pa_mix_forward(fine.data(), coarse.data(), w.data(), p.size(), out.data());
    double l = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) l += out[i] * readout[i];
    return l;
  };

  std::vector<double> w(p.size());
  pa_weight_forward(p.data(), p.size(), alpha, beta, w.data());
  std::vector<double> gfine(p.size(), 0.0), gcoarse(p.size(), 0.0),
      gp(p.size(), 0.0);
  const PaScalarGrads sg =
      pa_backward(fine.data(), coarse.data(), p.data(), w.data(),
                  readout.data(), p.size(), alpha, beta, gfine.data(),
                  gcoarse.data(), gp.data());
  double galpha = sg.alpha, gbeta = sg.beta;

  const GradCheckReport rep = finite_difference_check(
      loss, {{"fine", fine.data(), gfine.data(), fine.size()},
             {"coarse", coarse.data(), gcoarse.data(), coarse.size()},
             {"p", p.data(), gp.data(), p.size()},
             {"alpha", &alpha, &galpha, 1},
             {"beta", &beta, &gbeta, 1}},
        1e-5);
  CHECK(rep.all_finite);
  CHECK(rep.max_rel_err <= 1e-6);
}

TEST_CASE("parallel kernels agree with the serial references") {
  const int ic = 3, ih = 13, iw = 11, oc = 4, k = 3, stride = 1, pad = 1;
  const auto in = random_vec(static_cast<std::size_t>(ic) * ih * iw, 91);
  const auto wgt =
      random_vec(static_cast<std::size_t>(oc) * ic * k * k, 92);
  const auto bias = random_vec(static_cast<std::size_t>(oc), 93);
  const int oh = conv_out_extent(ih, k, stride, pad);
  const int ow = conv_out_extent(iw, k, stride, pad);
  const auto gout = random_vec(static_cast<std::size_t>(oc) * oh * ow, 94);

  std::vector<double> a(static_cast<std::size_t>(oc) * oh * ow);
  std::vector<double> b(a.size());
  conv2d_forward(in.data(), ic, ih, iw, wgt.data(), bias.data(), oc, k,
                 stride, pad, a.data());
  ref::conv2d_forward(in.data(), ic, ih, iw, wgt.data(), bias.data(), oc, k,
                      stride, pad, b.data());
  CHECK(max_abs_diff(a, b) <= 1e-12);

  std::vector<double> gin_a(in.size(), 0.0), gin_b(in.size(), 0.0);
  conv2d_backward_input(wgt.data(), ic, ih, iw, oc, k, stride, pad,
                        gout.data(), gin_a.data());
  ref::conv2d_backward_input(wgt.data(), ic, ih, iw, oc, k, stride, pad,
                             gout.data(), gin_b.data());
  CHECK(max_abs_diff(gin_a, gin_b) <= 1e-12);

  std::vector<double> gw_a(wgt.size(), 0.0), gw_b(wgt.size(), 0.0);
  std::vector<double> gb_a(bias.size(), 0.0), gb_b(bias.size(), 0.0);
  conv2d_backward_params(in.data(), ic, ih, iw, oc, k, stride, pad,
                         gout.data(), gw_a.data(), gb_a.data());
  ref::conv2d_backward_params(in.data(), ic, ih, iw, oc, k, stride, pad,
                              gout.data(), gw_b.data(), gb_b.data());
  CHECK(max_abs_diff(gw_a, gw_b) <= 1e-12);
  CHECK(max_abs_diff(gb_a, gb_b) <= 1e-12);

  // Deconv pair.
  const auto din = random_vec(2 * 6 * 7, 95);
  const auto dw = random_vec(2 * 3 * 16, 96);
  const auto dgout = random_vec(3 * 12 * 14, 97);
  std::vector<double> da(3 * 12 * 14), db(da.size());
  deconv2x_forward(din.data(), 2, 6, 7, dw.data(), 3, da.data());
  ref::deconv2x_forward(din.data(), 2, 6, 7, dw.data(), 3, db.data());
  CHECK(max_abs_diff(da, db) <= 1e-12);

  std::vector<double> dgin_a(din.size(), 0.0), dgin_b(din.size(), 0.0);
  deconv2x_backward_input(dw.data(), 2, 6, 7, 3, dgout.data(), dgin_a.data());
  ref::deconv2x_backward_input(dw.data(), 2, 6, 7, 3, dgout.data(),
                               dgin_b.data());
  CHECK(max_abs_diff(dgin_a, dgin_b) <= 1e-12);

  std::vector<double> dgw_a(dw.size(), 0.0), dgw_b(dw.size(), 0.0);
  deconv2x_backward_weights(din.data(), 2, 6, 7, 3, dgout.data(), dgw_a.data());
  ref::deconv2x_backward_weights(din.data(), 2, 6, 7, 3, dgout.data(),
                                 dgw_b.data());
  CHECK(max_abs_diff(dgw_a, dgw_b) <= 1e-12);

  // Maxpool pair, argmax included.
  const auto pin = random_vec(3 * 8 * 10, 98);
  std::vector<double> pa(3 * 4 * 5), pb(pa.size());
  std::vector<int> aa(pa.size()), ab(pa.size());
  maxpool2x2_forward(pin.data(), 3, 8, 10, pa.data(), aa.data());
  ref::maxpool2x2_forward(pin.data(), 3, 8, 10, pb.data(), ab.data());
  CHECK(max_abs_diff(pa, pb) <= 0.0);
  CHECK(aa == ab);
}

TEST_CASE("results are bit-identical across thread counts") {
  const int saved = omp_get_max_threads();
  const auto in = random_vec(4 * 16 * 16, 101);
  const auto wgt = random_vec(static_cast<std::size_t>(8) * 4 * 3 * 3, 102);
  const auto bias = random_vec(8, 103);

  std::vector<std::vector<double>> runs;
  for (const int nt : {1, 2, 3}) {
    omp_set_num_threads(nt);
    std::vector<double> out(static_cast<std::size_t>(8) * 16 * 16);
    conv2d_forward(in.data(), 4, 16, 16, wgt.data(), bias.data(), 8, 3, 1, 1,
                   out.data());
    runs.push_back(std::move(out));
  }
  omp_set_num_threads(saved);
  CHECK(runs[0] == runs[1]);
  CHECK(runs[0] == runs[2]);
}

TEST_CASE("deterministic sum is independent of the thread count") {
  // Values spanning 12 orders of magnitude make the accumulation order
  // visible; fixed blocking must hide the thread count anyway.
  Rng rng(77);
  std::vector<double> x(20000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.uniform(-1.0, 1.0) * std::pow(10.0, rng.uniform(-6.0, 6.0));
  }
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const double s1 = deterministic_sum(x.data(), x.size());
  omp_set_num_threads(3);
  const double s3 = deterministic_sum(x.data(), x.size());
  omp_set_num_threads(saved);
  CHECK(s1 == s3);

  double plain = 0.0;
  for (const double v : x) plain += v;
  CHECK(s1 == doctest::Approx(plain).epsilon(1e-9));
}

TEST_CASE("gradient checker flags corrupted analytic gradients") {
  auto x = random_vec(8, 111);
  const auto readout = random_vec(8, 112);
  const auto loss = [&]() {
    double l = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) l += x[i] * readout[i];
    return l;
  };
  std::vector<double> good(readout);
  const GradCheckReport ok =
      finite_difference_check(loss, {{"x", x.data(), good.data(), x.size()}});
  CHECK(ok.max_rel_err <= 1e-9);

  std::vector<double> bad(readout);
  bad[3] *= 1.5;
  const GradCheckReport flagged =
      finite_difference_check(loss, {{"x", x.data(), bad.data(), x.size()}});
  CHECK(flagged.max_rel_err >= 1e-1);
  CHECK(flagged.per_target[0].worst_index == 3);
}

TEST_CASE("fill and add_scaled") {
  std::vector<double> x(10, -1.0);
  fill(x.data(), x.size(), 2.5);
  for (const double v : x) CHECK(v == 2.5);
  const auto src = random_vec(10, 121);
  add_scaled(x.data(), src.data(), 0.5, x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i] == doctest::Approx(2.5 + 0.5 * src[i]).epsilon(1e-15));
  }
}
