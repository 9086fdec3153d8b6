#pragma once

#include <optional>
#include <vector>

#include "pacnn/config.hpp"
#include "pacnn/scene.hpp"
#include "pacnn/tanh_fit.hpp"
#include "pacnn/value_map.hpp"

namespace pacnn {

// Ground-truth density kernel. With no fixed_sigma each head gets
// sigma = sigma_scale * (mean distance to its knn_k nearest neighbors);
// fewer neighbors than knn_k fall back to however many exist, and a lone
// head uses sigma_scale * (width + height) / 8 as a neutral image-scale
// width. Kernels are cut at truncation_radius_sigmas and renormalized so
// every head contributes exactly unit mass even when clipped at borders.
struct DensityKernelConfig {
  int knn_k = 3;
  double sigma_scale = 0.3;
  std::optional<double> fixed_sigma;
  double truncation_radius_sigmas = 4.0;

  static DensityKernelConfig from_config(const KeyValueConfig& cfg);
  void validate() const;
};

ValueMap render_density_map(const AnnotatedScene& scene,
                            const DensityKernelConfig& cfg);

struct PerspectiveSample {
  double row = 0.0;
  double value = 0.0;
};

// Per-head local scale: mean distance to the k nearest other heads,
// reported against the head's row. Requires at least k+1 heads.
std::vector<PerspectiveSample> knn_head_scales(const AnnotatedScene& scene,
                                               int k);

// Collapses samples into row bins of bin_height pixels; each occupied bin
// yields one sample at the bin's center row with the mean value. Output is
// sorted by row.
std::vector<PerspectiveSample> row_mean_samples(
    const std::vector<PerspectiveSample>& samples, int bin_height);

// Evaluates a fitted scale curve over a raster. Values are clamped from
// below at clamp_epsilon so downstream ratios stay finite. row_offset
// shifts the evaluation window: row y of the output uses curve row
// (y + row_offset), which lets crops reuse their parent scene's fit.
ValueMap render_perspective_map(const TanhFitParams& fit, int width,
                                int height, double clamp_epsilon = 1e-3,
                                int row_offset = 0);

}  // namespace pacnn
