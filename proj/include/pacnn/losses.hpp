#pragma once

#include "pacnn/config.hpp"
#include "pacnn/model.hpp"
#include "pacnn/value_map.hpp"

namespace pacnn {

// Per-term objective: 0.5 * sum((e - g)^2) plus a structural-dissimilarity
// penalty weighted by lambda_dssim times the map's pixel count, so both
// components scale like sums when map sizes change.
struct LossWeights {
  double lambda_dssim = 0.001;
  double kappa = 0.1;    // perspective term at 1/16
  double lambda1 = 0.1;  // density head at 1/8
  double lambda2 = 0.1;  // density head at 1/16
  double lambda3 = 0.1;  // density head at 1/32

  static LossWeights from_config(const KeyValueConfig& cfg);
  void validate() const;
};

struct SsimConfig {
  int window = 5;
  double sigma = 1.0;
  double c1 = 0.0;
  double c2 = 0.0;

  void validate() const;
};

// Standard SSIM stabilizers (0.01*L)^2 and (0.03*L)^2 with the dynamic
// range taken from the target map, floored at 1e-6 for all-zero targets.
SsimConfig ssim_for_target(const ValueMap& target, int window = 5,
                           double sigma = 1.0);

// 0.5 * sum of squared differences. If grad is non-null it is overwritten
// with (estimate - target).
double mse_loss(const ValueMap& estimate, const ValueMap& target,
                ValueMap* grad = nullptr);

// Per-pixel SSIM with Gaussian-weighted local statistics. Windows are
// clipped at the borders and renormalized, so identical maps score exactly
// 1 everywhere. Values lie in [-1, 1] up to rounding.
ValueMap ssim_map(const ValueMap& estimate, const ValueMap& target,
                  const SsimConfig& cfg);

// 1 - mean SSIM, in [0, 2]. If grad is non-null it is overwritten with the
// analytic derivative through the local means, variances and covariance.
double dssim_loss(const ValueMap& estimate, const ValueMap& target,
                  const SsimConfig& cfg, ValueMap* grad = nullptr);

// Supervision targets. Density maps are sum-downsampled (mass preserving),
// perspective maps mean-downsampled (row values are resolution-free).
struct GtBundle {
  ValueMap d8, d16, d32;
  ValueMap p8, p16;
};

GtBundle make_gt_bundle(const ValueMap& density, const ValueMap& perspective,
                        double density_scale, double perspective_scale);

struct LossBreakdown {
  double total = 0.0;
  // Raw per-term values before the kappa/lambda weighting.
  double d_e = 0.0;
  double p_e = 0.0;
  double p_es = 0.0;
  double d_e1 = 0.0;
  double d_e2 = 0.0;
  double d_e3 = 0.0;
};

// total = p_e + d_e + kappa*p_es + lambda1*d_e1 + lambda2*d_e2
//       + lambda3*d_e3. Perspective terms are dropped when
// with_perspective is false (density-only pretraining). Terms on maps
// smaller than the SSIM window fall back to pure MSE. If grads is non-null
// its maps are overwritten with the weighted derivatives, shaped to feed
// Model::backward directly.
LossBreakdown composite_loss(const MultiScaleOutputs& outputs,
                             const GtBundle& gts, const LossWeights& wts,
                             const SsimConfig& ssim_cfg,
                             bool with_perspective = true,
                             OutputGrads* grads = nullptr);

}  // namespace pacnn
