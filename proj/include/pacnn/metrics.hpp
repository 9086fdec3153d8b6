#pragma once

#include <string>
#include <vector>

#include "pacnn/model.hpp"
#include "pacnn/scene.hpp"
#include "pacnn/value_map.hpp"

namespace pacnn {

struct CountMetrics {
  double mae = 0.0;
  double mse = 0.0;  // root of the mean squared count error
  int n = 0;
};

// Integral of the density map, restricted to the mask when given (same
// size as the map; full-resolution ROIs are majority-downsampled by the
// caller) and divided by density_scale to undo the loss normalization.
double count_from_density(const ValueMap& density, double density_scale,
                          const ValueMap* roi = nullptr);

struct SceneCount {
  std::string id;
  double predicted = 0.0;
  double actual = 0.0;
};

// Whole-image inference over the dataset; the padded border the model may
// add is left in the sum (it carries no annotated mass). Scene ROIs are
// majority-downsampled to the output resolution.
CountMetrics evaluate(Model& model, const std::vector<AnnotatedScene>& scenes,
                      CombineMode mode, double density_scale,
                      std::vector<SceneCount>* per_scene = nullptr);

CountMetrics metrics_from_counts(const std::vector<SceneCount>& counts);

}  // namespace pacnn
