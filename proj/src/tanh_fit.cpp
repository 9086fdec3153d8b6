#include "pacnn/tanh_fit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>

#include "pacnn/errors.hpp"
#include "pacnn/gt_maps.hpp"
#include "pacnn/rng.hpp"

namespace pacnn {

double TanhFitParams::evaluate(double row) const {
  return a * std::tanh(b * (row + c));
}

namespace {

double sse(const std::vector<PerspectiveSample>& s, double a, double b,
           double c) {
  double acc = 0.0;
  for (const auto& p : s) {
    const double r = a * std::tanh(b * (p.row + c)) - p.value;
    acc += r * r;
  }
  return acc;
}

// Solves (JtJ + mu * diag) delta = -Jtr for 3 parameters via Cholesky.
// The damped diagonal is positive, so the factorization exists.
bool solve3(const std::array<double, 9>& m, const std::array<double, 3>& rhs,
            std::array<double, 3>& out) {
  std::array<double, 9> l{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = m[static_cast<std::size_t>(i * 3 + j)];
      for (int k = 0; k < j; ++k) {
        s -= l[static_cast<std::size_t>(i * 3 + k)] *
             l[static_cast<std::size_t>(j * 3 + k)];
      }
      if (i == j) {
        if (!(s > 0.0)) return false;
        l[static_cast<std::size_t>(i * 3 + i)] = std::sqrt(s);
      } else {
        l[static_cast<std::size_t>(i * 3 + j)] =
            s / l[static_cast<std::size_t>(j * 3 + j)];
      }
    }
  }
  std::array<double, 3> y{};
  for (int i = 0; i < 3; ++i) {
    double s = rhs[static_cast<std::size_t>(i)];
    for (int k = 0; k < i; ++k) {
      s -= l[static_cast<std::size_t>(i * 3 + k)] * y[static_cast<std::size_t>(k)];
    }
    y[static_cast<std::size_t>(i)] = s / l[static_cast<std::size_t>(i * 3 + i)];
  }
  for (int i = 2; i >= 0; --i) {
    double s = y[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < 3; ++k) {
      s -= l[static_cast<std::size_t>(k * 3 + i)] * out[static_cast<std::size_t>(k)];
    }
    out[static_cast<std::size_t>(i)] = s / l[static_cast<std::size_t>(i * 3 + i)];
  }
  return true;
}

struct LmResult {
  double a, b, c;
  double final_sse;
  bool converged;
};

LmResult lm_fit(const std::vector<PerspectiveSample>& s, double a, double b,
                double c, const TanhFitOptions& opts) {
  double cur = sse(s, a, b, c);
  double mu = 1e-3;
  bool converged = false;
  for (int it = 0; it < opts.max_iterations; ++it) {
    // JtJ and Jtr for residual r_i = a*tanh(u) - v, u = b*(row + c).
    std::array<double, 9> jtj{};
    std::array<double, 3> jtr{};
    for (const auto& p : s) {
      const double u = b * (p.row + c);
      const double t = std::tanh(u);
      const double sech2 = 1.0 - t * t;
      const double r = a * t - p.value;
      const std::array<double, 3> j = {t, a * sech2 * (p.row + c),
                                       a * sech2 * b};
      for (int i = 0; i < 3; ++i) {
        jtr[static_cast<std::size_t>(i)] += j[static_cast<std::size_t>(i)] * r;
        for (int k = 0; k <= i; ++k) {
          jtj[static_cast<std::size_t>(i * 3 + k)] +=
              j[static_cast<std::size_t>(i)] * j[static_cast<std::size_t>(k)];
        }
      }
    }
    for (int i = 0; i < 3; ++i) {
      for (int k = i + 1; k < 3; ++k) {
        jtj[static_cast<std::size_t>(i * 3 + k)] =
            jtj[static_cast<std::size_t>(k * 3 + i)];
      }
    }

    bool stepped = false;
    for (int inner = 0; inner < 16; ++inner) {
      std::array<double, 9> m = jtj;
      for (int i = 0; i < 3; ++i) {
        const double d = std::max(jtj[static_cast<std::size_t>(i * 4)], 1e-12);
        m[static_cast<std::size_t>(i * 4)] += mu * d;
      }
      std::array<double, 3> delta{};
      const std::array<double, 3> rhs = {-jtr[0], -jtr[1], -jtr[2]};
      if (!solve3(m, rhs, delta)) {
        mu *= 4.0;
        continue;
      }
      const double na = a + delta[0];
      const double nb = b + delta[1];
      const double nc = c + delta[2];
      const double trial = sse(s, na, nb, nc);
      if (std::isfinite(trial) && trial <= cur) {
        const double drop = cur - trial;
        a = na;
        b = nb;
        c = nc;
        cur = trial;
        mu = std::max(mu / 3.0, 1e-12);
        stepped = true;
        if (drop <= opts.tolerance * std::max(cur, 1e-300)) converged = true;
        break;
      }
      mu *= 4.0;
    }
    if (!stepped) {
      // Damping exhausted: local minimum to working precision.
      converged = true;
    }
    if (converged) break;
  }
  return {a, b, c, cur, converged};
}

}  // namespace

TanhFitParams fit_tanh(const std::vector<PerspectiveSample>& samples,
                       const TanhFitOptions& opts) {
  if (samples.size() < 3) {
    throw InsufficientDataError("tanh fit needs at least 3 samples");
  }
  std::set<double> rows;
  for (const auto& s : samples) rows.insert(s.row);
  if (rows.size() < 2) {
    throw InsufficientDataError("tanh fit needs samples on >= 2 distinct rows");
  }

  double row_min = samples[0].row, row_max = samples[0].row;
  double v_absmax = 0.0, v_mean = 0.0;
  for (const auto& s : samples) {
    row_min = std::min(row_min, s.row);
    row_max = std::max(row_max, s.row);
    v_absmax = std::max(v_absmax, std::abs(s.value));
    v_mean += s.value;
  }
  v_mean /= static_cast<double>(samples.size());
  const double span = row_max - row_min;

  // Heuristic start: amplitude at the largest magnitude, zero crossing at
  // the top row, slope chosen so the curve is at tanh(2) by the bottom row.
  const double a0 = v_absmax > 0.0 ? v_absmax : 1.0;
  const double c0 = -row_min;
  const double b0 = 2.0 / span;

  struct Start {
    double a, b, c;
  };
  std::vector<Start> starts;
  starts.push_back({a0, b0, c0});
  Rng rng(derive_seed(opts.seed, 0x7a4f));
  for (int i = 0; i < opts.restarts; ++i) {
    starts.push_back({a0 * std::exp(0.3 * rng.normal()),
                      b0 * std::exp(0.5 * rng.normal()),
                      c0 + 0.3 * span * rng.normal()});
  }
  // Plateau start: already saturated across all rows, exact for flat
  // profiles where the other starts sit in a zero-gradient valley.
  starts.push_back({v_mean != 0.0 ? v_mean : a0, 1.0, -row_min + 20.0 + span});

  LmResult best{0, 0, 0, std::numeric_limits<double>::infinity(), false};
  for (const auto& st : starts) {
    const LmResult r = lm_fit(samples, st.a, st.b, st.c, opts);
    if (r.final_sse < best.final_sse) best = r;
  }

  TanhFitParams out;
  out.a = best.a;
  out.b = best.b;
  out.c = best.c;
  if (out.a < 0.0 && out.b < 0.0) {
    // a*tanh(b*(y+c)) is invariant under flipping the signs of both.
    out.a = -out.a;
    out.b = -out.b;
  }
  out.residual_rms = std::sqrt(best.final_sse / static_cast<double>(samples.size()));
  out.n_rows_used = static_cast<int>(rows.size());
  out.converged = best.converged;
  return out;
}

LinearFitParams fit_linear(const std::vector<PerspectiveSample>& samples) {
  if (samples.size() < 2) {
    throw InsufficientDataError("linear fit needs at least 2 samples");
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(samples.size());
  for (const auto& s : samples) {
    sx += s.row;
    sy += s.value;
    sxx += s.row * s.row;
    sxy += s.row * s.value;
  }
  const double det = n * sxx - sx * sx;
  if (!(std::abs(det) > 1e-12 * std::max(1.0, n * sxx))) {
    throw InsufficientDataError("linear fit needs >= 2 distinct rows");
  }
  LinearFitParams out;
  out.slope = (n * sxy - sx * sy) / det;
  out.intercept = (sy - out.slope * sx) / n;
  double acc = 0.0;
  for (const auto& s : samples) {
    const double r = out.slope * s.row + out.intercept - s.value;
    acc += r * r;
  }
  out.residual_rms = std::sqrt(acc / n);
  return out;
}

}  // namespace pacnn
