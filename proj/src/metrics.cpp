#include "pacnn/metrics.hpp"

#include <cmath>

#include "pacnn/errors.hpp"

namespace pacnn {

double count_from_density(const ValueMap& density, double density_scale,
                          const ValueMap* roi) {
  if (density.empty()) throw ShapeError("count on an empty map");
  if (!(density_scale > 0.0)) {
    throw ConfigError("density scale must be positive");
  }
  if (roi == nullptr) return density.total() / density_scale;
  if (!roi->same_shape(density)) {
    throw ShapeError("roi size differs from the density map");
  }
  ValueMap masked(density.width, density.height);
  for (std::size_t i = 0; i < masked.size(); ++i) {
    masked.values[i] =
        roi->values[i] != 0.0 ? density.values[i] : 0.0;
  }
  return masked.total() / density_scale;
}

CountMetrics evaluate(Model& model, const std::vector<AnnotatedScene>& scenes,
                      CombineMode mode, double density_scale,
                      std::vector<SceneCount>* per_scene) {
  if (scenes.empty()) throw InsufficientDataError("no scenes to evaluate");
  std::vector<SceneCount> counts;
  counts.reserve(scenes.size());
  for (const AnnotatedScene& s : scenes) {
    if (s.image.empty()) {
      throw ShapeError("scene " + s.id + " has no image");
    }
    const MultiScaleOutputs out = model.forward(s.image, mode);
    SceneCount c;
    c.id = s.id;
    c.actual = static_cast<double>(s.heads.size());
    if (s.roi.has_value()) {
      ValueMap padded = pad_map(*s.roi, s.width + out.pad_x,
                                s.height + out.pad_y, PadMode::kZero);
      const ValueMap roi8 = downsample_mask_majority(padded, 8);
      c.predicted = count_from_density(out.d_e, density_scale, &roi8);
      // Heads outside the mask do not count toward the target either.
      double inside = 0.0;
      for (const Point& p : s.heads) {
        if (s.roi->at(static_cast<int>(p.x), static_cast<int>(p.y)) != 0.0) {
          inside += 1.0;
        }
      }
      c.actual = inside;
    } else {
      c.predicted = count_from_density(out.d_e, density_scale);
    }
    counts.push_back(c);
  }
  if (per_scene != nullptr) *per_scene = counts;
  return metrics_from_counts(counts);
}

CountMetrics metrics_from_counts(const std::vector<SceneCount>& counts) {
  if (counts.empty()) throw InsufficientDataError("no counts to aggregate");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (const SceneCount& c : counts) {
    const double err = c.predicted - c.actual;
    abs_sum += std::abs(err);
    sq_sum += err * err;
  }
  CountMetrics m;
  m.n = static_cast<int>(counts.size());
  m.mae = abs_sum / m.n;
  m.mse = std::sqrt(sq_sum / m.n);
  return m;
}

}  // namespace pacnn
