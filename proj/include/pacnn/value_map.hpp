#pragma once

#include <cstddef>
#include <vector>

namespace pacnn {

// Dense single-channel raster, row-major, y increasing downward.
// Double storage throughout: gradient checks in the test suite compare
// analytic and central-difference derivatives at 1e-4 relative tolerance,
// which single precision cannot hold reliably. On-disk formats stay float32.
struct ValueMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  ValueMap() = default;
  ValueMap(int w, int h, double fill = 0.0)
      : width(w), height(h),
        values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h),
               fill) {}

  double& at(int x, int y) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  double at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  bool same_shape(const ValueMap& o) const {
    return width == o.width && height == o.height;
  }

  double total() const;
  double max_value() const;
  double min_value() const;
};

enum class DownsampleMode { kSum, kMean };

// Integer-factor block reduction. Partial blocks at the right/bottom edges
// are zero-padded; kMean still divides by the full factor*factor so that
// kSum preserves total mass and kMean equals kSum / factor^2.
ValueMap downsample(const ValueMap& in, int factor, DownsampleMode mode);

// Majority vote per block for binary masks: 1 when at least half the
// covered source cells (zero-padded at edges) are nonzero.
ValueMap downsample_mask_majority(const ValueMap& in, int factor);

enum class PadMode { kZero, kEdge };

// Grow a map to new_w x new_h by padding the right/bottom edges, either
// with zeros (mass-preserving for density maps) or by replicating the last
// row/column (shape-preserving for row-wise perspective maps).
ValueMap pad_map(const ValueMap& in, int new_w, int new_h, PadMode mode);

// Deterministic sum: fixed-size blocks are accumulated serially and folded
// in index order, so the result is independent of the OpenMP thread count.
double deterministic_sum(const double* x, std::size_t n);

}  // namespace pacnn
