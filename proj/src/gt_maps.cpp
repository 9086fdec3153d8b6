#include "pacnn/gt_maps.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pacnn/errors.hpp"

namespace pacnn {

DensityKernelConfig DensityKernelConfig::from_config(const KeyValueConfig& cfg) {
  DensityKernelConfig k;
  k.knn_k = cfg.get_int("kernel.knn_k", k.knn_k);
  k.sigma_scale = cfg.get_real("kernel.sigma_scale", k.sigma_scale);
  if (cfg.has("kernel.fixed_sigma"))
    k.fixed_sigma = cfg.get_real("kernel.fixed_sigma", 0.0);
  k.truncation_radius_sigmas = cfg.get_real("kernel.truncation_radius_sigmas",
                                            k.truncation_radius_sigmas);
  k.validate();
  return k;
}

void DensityKernelConfig::validate() const {
  if (knn_k < 1) throw ConfigError("knn_k must be >= 1");
  if (!(sigma_scale > 0.0)) throw ConfigError("sigma_scale must be > 0");
  if (fixed_sigma && !(*fixed_sigma > 0.0)) {
    throw ConfigError("fixed_sigma must be > 0");
  }
  if (!(truncation_radius_sigmas > 0.0)) {
    throw ConfigError("truncation_radius_sigmas must be > 0");
  }
}

namespace {

std::vector<double> head_sigmas(const AnnotatedScene& scene,
                                const DensityKernelConfig& cfg) {
  const int n = static_cast<int>(scene.heads.size());
  std::vector<double> sigma(static_cast<std::size_t>(n));
  if (cfg.fixed_sigma) {
    std::fill(sigma.begin(), sigma.end(), *cfg.fixed_sigma);
    return sigma;
  }
  if (n == 1) {
    sigma[0] = cfg.sigma_scale * (scene.width + scene.height) / 8.0;
    if (!(sigma[0] > 0.0)) throw ConfigError("adaptive sigma is not positive");
    return sigma;
  }
  const int k_eff = std::min(cfg.knn_k, n - 1);
#pragma omp parallel for schedule(static)
  for (int j = 0; j < n; ++j) {
    std::vector<double> d2;
    d2.reserve(static_cast<std::size_t>(n) - 1);
    for (int i = 0; i < n; ++i) {
      if (i == j) continue;
      const double dx = scene.heads[static_cast<std::size_t>(i)].x -
                        scene.heads[static_cast<std::size_t>(j)].x;
      const double dy = scene.heads[static_cast<std::size_t>(i)].y -
                        scene.heads[static_cast<std::size_t>(j)].y;
      d2.push_back(dx * dx + dy * dy);
    }
    std::partial_sort(d2.begin(), d2.begin() + k_eff, d2.end());
    double mean = 0.0;
    for (int i = 0; i < k_eff; ++i) mean += std::sqrt(d2[static_cast<std::size_t>(i)]);
    mean /= k_eff;
    sigma[static_cast<std::size_t>(j)] = cfg.sigma_scale * mean;
  }
  for (const double s : sigma) {
    if (!(s > 0.0)) {
      throw ConfigError("adaptive sigma is not positive; scenes with "
                        "coincident heads need fixed_sigma");
    }
  }
  return sigma;
}

}  // namespace

ValueMap render_density_map(const AnnotatedScene& scene,
                            const DensityKernelConfig& cfg) {
  scene.validate();
  cfg.validate();
  ValueMap out(scene.width, scene.height);
  const int n = static_cast<int>(scene.heads.size());
  if (n == 0) return out;

  const std::vector<double> sigma = head_sigmas(scene, cfg);

  // Per-head clipped window and normalizer, so each head deposits exactly
  // unit mass regardless of border clipping.
  struct Window {
    int x0, x1, y0, y1;
    double inv2s2;
    double inv_mass;
  };
  std::vector<Window> win(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (int j = 0; j < n; ++j) {
    const double s = sigma[static_cast<std::size_t>(j)];
    const double reach = cfg.truncation_radius_sigmas * s;
    const double hx = scene.heads[static_cast<std::size_t>(j)].x;
    const double hy = scene.heads[static_cast<std::size_t>(j)].y;
    Window w;
    w.x0 = std::max(0, static_cast<int>(std::floor(hx - reach)));
    w.x1 = std::min(scene.width - 1, static_cast<int>(std::ceil(hx + reach)));
    w.y0 = std::max(0, static_cast<int>(std::floor(hy - reach)));
    w.y1 = std::min(scene.height - 1, static_cast<int>(std::ceil(hy + reach)));
    w.inv2s2 = 1.0 / (2.0 * s * s);
    double mass = 0.0;
    for (int y = w.y0; y <= w.y1; ++y) {
      for (int x = w.x0; x <= w.x1; ++x) {
        const double dx = x - hx;
        const double dy = y - hy;
        mass += std::exp(-(dx * dx + dy * dy) * w.inv2s2);
      }
    }
    // The window always contains the pixel under the head, so mass > 0.
    w.inv_mass = 1.0 / mass;
    win[static_cast<std::size_t>(j)] = w;
  }

  // Accumulate by output row: no write races, and the per-row head order is
  // fixed, so results do not depend on the thread count.
#pragma omp parallel for schedule(static)
  for (int y = 0; y < scene.height; ++y) {
    for (int j = 0; j < n; ++j) {
      const Window& w = win[static_cast<std::size_t>(j)];
      if (y < w.y0 || y > w.y1) continue;
      const double hx = scene.heads[static_cast<std::size_t>(j)].x;
      const double dy = y - scene.heads[static_cast<std::size_t>(j)].y;
      for (int x = w.x0; x <= w.x1; ++x) {
        const double dx = x - hx;
        out.at(x, y) +=
            std::exp(-(dx * dx + dy * dy) * w.inv2s2) * w.inv_mass;
      }
    }
  }
  return out;
}

std::vector<PerspectiveSample> knn_head_scales(const AnnotatedScene& scene,
                                               int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  const int n = static_cast<int>(scene.heads.size());
  if (n < k + 1) {
    throw InsufficientDataError("need at least k+1 heads for k-NN scales");
  }
  std::vector<PerspectiveSample> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (int j = 0; j < n; ++j) {
    std::vector<double> d2;
    d2.reserve(static_cast<std::size_t>(n) - 1);
    for (int i = 0; i < n; ++i) {
      if (i == j) continue;
      const double dx = scene.heads[static_cast<std::size_t>(i)].x -
                        scene.heads[static_cast<std::size_t>(j)].x;
      const double dy = scene.heads[static_cast<std::size_t>(i)].y -
                        scene.heads[static_cast<std::size_t>(j)].y;
      d2.push_back(dx * dx + dy * dy);
    }
    std::partial_sort(d2.begin(), d2.begin() + k, d2.end());
    double mean = 0.0;
    for (int i = 0; i < k; ++i) mean += std::sqrt(d2[static_cast<std::size_t>(i)]);
    out[static_cast<std::size_t>(j)] = {scene.heads[static_cast<std::size_t>(j)].y,
                                        mean / k};
  }
  return out;
}

std::vector<PerspectiveSample> row_mean_samples(
    const std::vector<PerspectiveSample>& samples, int bin_height) {
  if (bin_height < 1) throw ConfigError("bin_height must be >= 1");
  struct Acc {
    double sum = 0.0;
    int n = 0;
  };
  std::map<long, Acc> bins;
  for (const auto& s : samples) {
    const long b = static_cast<long>(std::floor(s.row / bin_height));
    auto& acc = bins[b];
    acc.sum += s.value;
    acc.n += 1;
  }
  std::vector<PerspectiveSample> out;
  out.reserve(bins.size());
  for (const auto& [b, acc] : bins) {
    out.push_back({(b + 0.5) * bin_height, acc.sum / acc.n});
  }
  return out;
}

ValueMap render_perspective_map(const TanhFitParams& fit, int width,
                                int height, double clamp_epsilon,
                                int row_offset) {
  if (width < 1 || height < 1) throw ShapeError("perspective map needs positive extent");
  if (!(clamp_epsilon > 0.0)) throw ConfigError("clamp_epsilon must be > 0");
  ValueMap out(width, height);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    const double v = std::max(fit.evaluate(static_cast<double>(y + row_offset)),
                              clamp_epsilon);
    for (int x = 0; x < width; ++x) out.at(x, y) = v;
  }
  return out;
}

}  // namespace pacnn
