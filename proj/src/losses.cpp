#include "pacnn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pacnn/errors.hpp"

namespace pacnn {

LossWeights LossWeights::from_config(const KeyValueConfig& cfg) {
  LossWeights w;
  w.lambda_dssim = cfg.get_real("loss.lambda_dssim", w.lambda_dssim);
  w.kappa = cfg.get_real("loss.kappa", w.kappa);
  w.lambda1 = cfg.get_real("loss.lambda1", w.lambda1);
  w.lambda2 = cfg.get_real("loss.lambda2", w.lambda2);
  w.lambda3 = cfg.get_real("loss.lambda3", w.lambda3);
  w.validate();
  return w;
}

void LossWeights::validate() const {
  for (const double v : {lambda_dssim, kappa, lambda1, lambda2, lambda3}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError("loss weights must be finite and non-negative");
    }
  }
}

void SsimConfig::validate() const {
  if (window < 1 || window % 2 == 0) {
    throw ConfigError("ssim window must be odd and positive");
  }
  if (!(sigma > 0.0)) throw ConfigError("ssim sigma must be positive");
  if (!(c1 > 0.0) || !(c2 > 0.0)) {
    throw ConfigError("ssim stabilizers must be positive");
  }
}

SsimConfig ssim_for_target(const ValueMap& target, int window, double sigma) {
  SsimConfig cfg;
  cfg.window = window;
  cfg.sigma = sigma;
  const double range = std::max(target.max_value(), 1e-6);
  cfg.c1 = (0.01 * range) * (0.01 * range);
  cfg.c2 = (0.03 * range) * (0.03 * range);
  cfg.validate();
  return cfg;
}

double mse_loss(const ValueMap& estimate, const ValueMap& target,
                ValueMap* grad) {
  if (!estimate.same_shape(target)) {
    throw ShapeError("mse_loss maps differ in size");
  }
  ValueMap sq(estimate.width, estimate.height);
  if (grad != nullptr) *grad = ValueMap(estimate.width, estimate.height);
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double d = estimate.values[i] - target.values[i];
    sq.values[i] = d * d;
    if (grad != nullptr) grad->values[i] = d;
  }
  return 0.5 * sq.total();
}

namespace {

struct SsimPlan {
  int radius;
  std::vector<double> k1d;  // unnormalized Gaussian taps, length 2r+1
  std::vector<double> zy;   // per-row clipped 1D kernel sums
  std::vector<double> zx;   // per-column clipped 1D kernel sums

  SsimPlan(int width, int height, const SsimConfig& cfg)
      : radius(cfg.window / 2), k1d(static_cast<std::size_t>(cfg.window)),
        zy(static_cast<std::size_t>(height)),
        zx(static_cast<std::size_t>(width)) {
    for (int d = -radius; d <= radius; ++d) {
      k1d[static_cast<std::size_t>(d + radius)] =
          std::exp(-0.5 * d * d / (cfg.sigma * cfg.sigma));
    }
    auto axis_sum = [&](int pos, int extent) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        const int q = pos + d;
        if (q >= 0 && q < extent) s += k1d[static_cast<std::size_t>(d + radius)];
      }
      return s;
    };
    for (int y = 0; y < height; ++y) zy[static_cast<std::size_t>(y)] = axis_sum(y, height);
    for (int x = 0; x < width; ++x) zx[static_cast<std::size_t>(x)] = axis_sum(x, width);
  }
};

struct SsimPoint {
  double s;        // SSIM value
  double ds_dmu;   // partial wrt mu_e
  double ds_dvar;  // partial wrt sigma_e^2
  double ds_dcov;  // partial wrt sigma_eg
  double mu_e, mu_g;
};

SsimPoint ssim_at(const ValueMap& e, const ValueMap& g, const SsimPlan& plan,
                  const SsimConfig& cfg, int x, int y) {
  const int r = plan.radius;
  const int y0 = std::max(0, y - r), y1 = std::min(e.height - 1, y + r);
  const int x0 = std::max(0, x - r), x1 = std::min(e.width - 1, x + r);
  double se = 0.0, sg = 0.0, see = 0.0, sgg = 0.0, seg = 0.0;
  for (int yy = y0; yy <= y1; ++yy) {
    const double ky = plan.k1d[static_cast<std::size_t>(yy - y + r)];
    for (int xx = x0; xx <= x1; ++xx) {
      const double w = ky * plan.k1d[static_cast<std::size_t>(xx - x + r)];
      const double ev = e.at(xx, yy), gv = g.at(xx, yy);
      se += w * ev;
      sg += w * gv;
      see += w * ev * ev;
      sgg += w * gv * gv;
      seg += w * ev * gv;
    }
  }
  const double z = plan.zy[static_cast<std::size_t>(y)] *
                   plan.zx[static_cast<std::size_t>(x)];
  const double mu_e = se / z, mu_g = sg / z;
  const double var_e = see / z - mu_e * mu_e;
  const double var_g = sgg / z - mu_g * mu_g;
  const double cov = seg / z - mu_e * mu_g;

  const double t1 = 2.0 * mu_e * mu_g + cfg.c1;
  const double t2 = 2.0 * cov + cfg.c2;
  const double b1 = mu_e * mu_e + mu_g * mu_g + cfg.c1;
  const double b2 = var_e + var_g + cfg.c2;

  SsimPoint p;
  p.s = (t1 * t2) / (b1 * b2);
  p.ds_dmu = 2.0 * mu_g * t2 / (b1 * b2) - p.s * 2.0 * mu_e / b1;
  p.ds_dvar = -p.s / b2;
  p.ds_dcov = 2.0 * t1 / (b1 * b2);
  p.mu_e = mu_e;
  p.mu_g = mu_g;
  return p;
}

void check_ssim_inputs(const ValueMap& estimate, const ValueMap& target,
                       const SsimConfig& cfg) {
  cfg.validate();
  if (!estimate.same_shape(target)) {
    throw ShapeError("ssim maps differ in size");
  }
  if (estimate.width < cfg.window || estimate.height < cfg.window) {
    throw ShapeError("ssim maps smaller than the window");
  }
}

}  // namespace

ValueMap ssim_map(const ValueMap& estimate, const ValueMap& target,
                  const SsimConfig& cfg) {
  check_ssim_inputs(estimate, target, cfg);
  const SsimPlan plan(estimate.width, estimate.height, cfg);
  ValueMap out(estimate.width, estimate.height);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < estimate.height; ++y) {
    for (int x = 0; x < estimate.width; ++x) {
      out.at(x, y) = ssim_at(estimate, target, plan, cfg, x, y).s;
    }
  }
  return out;
}

double dssim_loss(const ValueMap& estimate, const ValueMap& target,
                  const SsimConfig& cfg, ValueMap* grad) {
  check_ssim_inputs(estimate, target, cfg);
  const SsimPlan plan(estimate.width, estimate.height, cfg);
  const int w = estimate.width, h = estimate.height;
  const double inv_m = 1.0 / static_cast<double>(estimate.size());

  ValueMap s(w, h);
  // Per-center adjoint fields, already divided by that center's
  // normalization so the backward pass is a plain clipped correlation.
  ValueMap fa, fb, fc;
  if (grad != nullptr) {
    fa = ValueMap(w, h);
    fb = ValueMap(w, h);
    fc = ValueMap(w, h);
  }

#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const SsimPoint p = ssim_at(estimate, target, plan, cfg, x, y);
      s.at(x, y) = p.s;
      if (grad != nullptr) {
        const double z = plan.zy[static_cast<std::size_t>(y)] *
                         plan.zx[static_cast<std::size_t>(x)];
        fa.at(x, y) = (p.ds_dmu - 2.0 * p.mu_e * p.ds_dvar -
                       p.mu_g * p.ds_dcov) / z;
        fb.at(x, y) = 2.0 * p.ds_dvar / z;
        fc.at(x, y) = p.ds_dcov / z;
      }
    }
  }

  const double loss = 1.0 - s.total() * inv_m;

  if (grad != nullptr) {
    *grad = ValueMap(w, h);
    const int r = plan.radius;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
        const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
        double ca = 0.0, cb = 0.0, cc = 0.0;
        for (int yy = y0; yy <= y1; ++yy) {
          const double ky = plan.k1d[static_cast<std::size_t>(yy - y + r)];
          for (int xx = x0; xx <= x1; ++xx) {
            const double kk =
                ky * plan.k1d[static_cast<std::size_t>(xx - x + r)];
            ca += kk * fa.at(xx, yy);
            cb += kk * fb.at(xx, yy);
            cc += kk * fc.at(xx, yy);
          }
        }
        grad->at(x, y) = -inv_m * (ca + estimate.at(x, y) * cb +
                                   target.at(x, y) * cc);
      }
    }
  }
  return loss;
}

GtBundle make_gt_bundle(const ValueMap& density, const ValueMap& perspective,
                        double density_scale, double perspective_scale) {
  if (density.empty() || perspective.empty()) {
    throw ShapeError("gt bundle needs non-empty density and perspective maps");
  }
  auto scale = [](ValueMap m, double s) {
    for (double& v : m.values) v *= s;
    return m;
  };
  GtBundle b;
  b.d8 = scale(downsample(density, 8, DownsampleMode::kSum), density_scale);
  b.d16 = scale(downsample(density, 16, DownsampleMode::kSum), density_scale);
  b.d32 = scale(downsample(density, 32, DownsampleMode::kSum), density_scale);
  b.p8 = scale(downsample(perspective, 8, DownsampleMode::kMean),
               perspective_scale);
  b.p16 = scale(downsample(perspective, 16, DownsampleMode::kMean),
                perspective_scale);
  return b;
}

namespace {

// One objective term: MSE plus pixel-count-scaled DSSIM, falling back to
// pure MSE when the map is too small for the SSIM window. Writes the
// derivative scaled by term_weight into *slot when requested.
double loss_term(const ValueMap& est, const ValueMap& gt,
                 const LossWeights& wts, const SsimConfig& ssim_cfg,
                 double term_weight, ValueMap* slot) {
  ValueMap gm;
  double value = mse_loss(est, gt, slot != nullptr ? &gm : nullptr);
  double lam = wts.lambda_dssim * static_cast<double>(est.size());
  ValueMap gd;
  if (lam > 0.0 && est.width >= ssim_cfg.window &&
      est.height >= ssim_cfg.window) {
    SsimConfig cfg = ssim_for_target(gt, ssim_cfg.window, ssim_cfg.sigma);
    value += lam * dssim_loss(est, gt, cfg, slot != nullptr ? &gd : nullptr);
  } else {
    lam = 0.0;
  }
  if (slot != nullptr) {
    *slot = ValueMap(est.width, est.height);
    for (std::size_t i = 0; i < slot->size(); ++i) {
      double g = gm.values[i];
      if (lam > 0.0) g += lam * gd.values[i];
      slot->values[i] = term_weight * g;
    }
  }
  return value;
}

void require(const ValueMap& est, const ValueMap& gt, const char* what) {
  if (gt.empty()) {
    throw ConfigError(std::string("gt bundle is missing the ") + what +
                      " target");
  }
  if (!est.same_shape(gt)) {
    throw ShapeError(std::string("output/target size mismatch for ") + what);
  }
}

}  // namespace

LossBreakdown composite_loss(const MultiScaleOutputs& outputs,
                             const GtBundle& gts, const LossWeights& wts,
                             const SsimConfig& ssim_cfg, bool with_perspective,
                             OutputGrads* grads) {
  wts.validate();
  require(outputs.d_e, gts.d8, "density 1/8");
  require(outputs.d_e1, gts.d8, "density 1/8");
  require(outputs.d_e2, gts.d16, "density 1/16");
  require(outputs.d_e3, gts.d32, "density 1/32");
  if (with_perspective) {
    require(outputs.p_e, gts.p8, "perspective 1/8");
    require(outputs.p_es, gts.p16, "perspective 1/16");
  }

  if (grads != nullptr) *grads = OutputGrads{};

  LossBreakdown bd;
  auto slot = [&](ValueMap OutputGrads::* m) {
    return grads != nullptr ? &(grads->*m) : nullptr;
  };

  bd.d_e = loss_term(outputs.d_e, gts.d8, wts, ssim_cfg, 1.0,
                     slot(&OutputGrads::d_e));
  bd.d_e1 = loss_term(outputs.d_e1, gts.d8, wts, ssim_cfg, wts.lambda1,
                      slot(&OutputGrads::d_e1));
  bd.d_e2 = loss_term(outputs.d_e2, gts.d16, wts, ssim_cfg, wts.lambda2,
                      slot(&OutputGrads::d_e2));
  bd.d_e3 = loss_term(outputs.d_e3, gts.d32, wts, ssim_cfg, wts.lambda3,
                      slot(&OutputGrads::d_e3));
  bd.total = bd.d_e + wts.lambda1 * bd.d_e1 + wts.lambda2 * bd.d_e2 +
             wts.lambda3 * bd.d_e3;

  if (with_perspective) {
    bd.p_e = loss_term(outputs.p_e, gts.p8, wts, ssim_cfg, 1.0,
                       slot(&OutputGrads::p_e));
    bd.p_es = loss_term(outputs.p_es, gts.p16, wts, ssim_cfg, wts.kappa,
                        slot(&OutputGrads::p_es));
    bd.total += bd.p_e + wts.kappa * bd.p_es;
  }
  return bd;
}

}  // namespace pacnn
