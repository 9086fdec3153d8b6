#pragma once

#include <cstdint>
#include <vector>

namespace pacnn {

struct PerspectiveSample;

// Saturating scale profile value = a * tanh(b * (row + c)).
struct TanhFitParams {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double residual_rms = 0.0;
  int n_rows_used = 0;
  bool converged = false;

  double evaluate(double row) const;
};

struct TanhFitOptions {
  int max_iterations = 200;
  int restarts = 8;            // jittered restarts around the heuristic init
  double tolerance = 1e-12;    // relative decrease of the squared residual
  std::uint64_t seed = 0;
};

// Levenberg-Marquardt fit of the three curve parameters. Multi-start: the
// heuristic initialization plus `restarts` jittered copies plus one
// saturated start (handles flat profiles, where the optimum sits on the
// tanh plateau); the lowest-residual solution wins. A solution with both
// a < 0 and b < 0 is flipped to the equivalent positive pair.
TanhFitParams fit_tanh(const std::vector<PerspectiveSample>& samples,
                       const TanhFitOptions& opts = {});

struct LinearFitParams {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
};

// Ordinary least squares value = slope * row + intercept, for comparing
// against the saturating profile on the same samples.
LinearFitParams fit_linear(const std::vector<PerspectiveSample>& samples);

}  // namespace pacnn
