#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pacnn/config.hpp"
#include "pacnn/geometry.hpp"
#include "pacnn/value_map.hpp"

namespace pacnn {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct AnnotatedScene {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<Point> heads;         // strictly inside [0,width) x [0,height)
  ValueMap image;                   // grayscale in [0,1]; may be empty
  std::optional<ValueMap> roi;      // binary mask, scene dimensions
  std::optional<CameraModel> camera;
  std::vector<double> per_head_scale;  // nominal head radius; empty if unknown

  void validate() const;
};

// Synthetic crowd scenes with ground-truth perspective geometry.
// The horizon sits at image row 0; head rows span
// [row_min_frac, row_max_frac] * height, which via the camera model fixes
// the depth range. Head spacing and blob size both shrink linearly toward
// the horizon, so a scale estimator fitted on these scenes has a known
// target to recover.
struct SceneConfig {
  int width = 64;
  int height = 64;
  int count_min = 5;
  int count_max = 50;
  CameraModel camera{600.0, 17.75, 1.75};
  double blob_scale = 2.0;      // head radius = blob_scale * perspective(y)
  double spacing_scale = 3.0;   // local grid pitch = spacing_scale * perspective(y)
  double row_min_frac = 0.15;
  double row_max_frac = 0.95;
  double noise_level = 0.02;    // uniform background noise amplitude

  static SceneConfig from_config(const KeyValueConfig& cfg);
  void validate() const;
};

AnnotatedScene generate_scene(const SceneConfig& cfg, std::uint64_t seed,
                              const std::string& id = "");

std::vector<AnnotatedScene> generate_scenes(const SceneConfig& cfg,
                                            int n_scenes, std::uint64_t seed,
                                            const std::string& id_prefix);

}  // namespace pacnn
