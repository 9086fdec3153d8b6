#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace pacnn {

// One tensor to verify: `data` is mutated in place during probing and
// restored afterwards; `analytic` is the already-computed gradient.
struct GradCheckTarget {
  std::string name;
  double* data = nullptr;
  const double* analytic = nullptr;
  std::size_t n = 0;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t worst_index = 0;
  bool finite = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_target;
  double max_rel_err = 0.0;
  bool all_finite = true;
  std::size_t n_checked = 0;
};

// Central differences against analytic gradients. Each element is compared
// as |a - n| / max(|a|, |n|, floor) where floor is a fraction
// (rel_floor, default 1e-3) of the largest gradient magnitude across all
// targets: elements far below the dominant gradient scale are held to an
// absolute bar instead of an ever-tighter relative one, which keeps
// saturated regimes (true gradient ~ 0) from producing spurious failures.
// `loss` must be a pure function of the target data; it is called twice per
// checked element.
GradCheckReport finite_difference_check(
    const std::function<double()>& loss,
    const std::vector<GradCheckTarget>& targets, double step = 1e-3,
    double rel_floor = 1e-3);

}  // namespace pacnn
