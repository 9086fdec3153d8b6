#include "pacnn/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "pacnn/errors.hpp"

namespace pacnn {

GradCheckReport finite_difference_check(
    const std::function<double()>& loss,
    const std::vector<GradCheckTarget>& targets, double step,
    double rel_floor) {
  if (!(step > 0.0)) throw ConfigError("finite difference step must be > 0");

  // Snapshot analytic gradients first: probing reruns the caller's forward
  // pass, which may overwrite gradient buffers.
  std::vector<std::vector<double>> analytic(targets.size());
  std::vector<std::vector<double>> numeric(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    analytic[t].assign(targets[t].analytic, targets[t].analytic + targets[t].n);
    numeric[t].resize(targets[t].n);
  }

  GradCheckReport report;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    double* data = targets[t].data;
    for (std::size_t i = 0; i < targets[t].n; ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double hi = loss();
      data[i] = saved - step;
      const double lo = loss();
      data[i] = saved;
      numeric[t][i] = (hi - lo) / (2.0 * step);
      ++report.n_checked;
    }
  }

  double gmax = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    for (std::size_t i = 0; i < targets[t].n; ++i) {
      gmax = std::max(gmax, std::abs(analytic[t][i]));
      gmax = std::max(gmax, std::abs(numeric[t][i]));
    }
  }
  const double floor = std::max(rel_floor * gmax, 1e-12);

  for (std::size_t t = 0; t < targets.size(); ++t) {
    GradCheckEntry e;
    e.name = targets[t].name;
    for (std::size_t i = 0; i < targets[t].n; ++i) {
      const double a = analytic[t][i];
      const double n = numeric[t][i];
      if (!std::isfinite(a) || !std::isfinite(n)) {
        e.finite = false;
        report.all_finite = false;
        continue;
      }
      const double abs_err = std::abs(a - n);
      const double rel = abs_err / std::max({std::abs(a), std::abs(n), floor});
      if (rel > e.max_rel_err) {
        e.max_rel_err = rel;
        e.worst_index = i;
      }
      e.max_abs_err = std::max(e.max_abs_err, abs_err);
    }
    report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
    report.per_target.push_back(std::move(e));
  }
  return report;
}

}  // namespace pacnn
