#include "pacnn/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pacnn/errors.hpp"
#include "pacnn/rng.hpp"

namespace pacnn {

void AnnotatedScene::validate() const {
  if (width <= 0 || height <= 0) throw ShapeError("scene has empty extent");
  for (const auto& h : heads) {
    if (!(h.x >= 0.0) || !(h.x < width) || !(h.y >= 0.0) || !(h.y < height)) {
      throw DomainError("head outside scene bounds in scene '" + id + "'");
    }
  }
  if (!per_head_scale.empty() && per_head_scale.size() != heads.size()) {
    throw ShapeError("per_head_scale length mismatch in scene '" + id + "'");
  }
  if (!image.empty() && (image.width != width || image.height != height)) {
    throw ShapeError("image dimensions mismatch in scene '" + id + "'");
  }
  if (roi && (roi->width != width || roi->height != height)) {
    throw ShapeError("roi dimensions mismatch in scene '" + id + "'");
  }
}

SceneConfig SceneConfig::from_config(const KeyValueConfig& cfg) {
  SceneConfig s;
  s.width = cfg.get_int("scene.width", s.width);
  s.height = cfg.get_int("scene.height", s.height);
  s.count_min = cfg.get_int("scene.count_min", s.count_min);
  s.count_max = cfg.get_int("scene.count_max", s.count_max);
  s.camera.focal_length =
      cfg.get_real("scene.focal_length", s.camera.focal_length);
  s.camera.camera_height =
      cfg.get_real("scene.camera_height", s.camera.camera_height);
  s.camera.person_height =
      cfg.get_real("scene.person_height", s.camera.person_height);
  s.blob_scale = cfg.get_real("scene.blob_scale", s.blob_scale);
  s.spacing_scale = cfg.get_real("scene.spacing_scale", s.spacing_scale);
  s.row_min_frac = cfg.get_real("scene.row_min_frac", s.row_min_frac);
  s.row_max_frac = cfg.get_real("scene.row_max_frac", s.row_max_frac);
  s.noise_level = cfg.get_real("scene.noise_level", s.noise_level);
  s.validate();
  return s;
}

void SceneConfig::validate() const {
  if (width < 8 || height < 8) throw ConfigError("scene extent too small");
  if (count_min < 1 || count_max < count_min) {
    throw ConfigError("invalid head count range");
  }
  camera.validate();
  if (!(blob_scale > 0.0)) throw ConfigError("blob_scale must be > 0");
  if (!(spacing_scale > 0.0)) throw ConfigError("spacing_scale must be > 0");
  if (!(row_min_frac > 0.0) || !(row_max_frac > row_min_frac) ||
      row_max_frac > 1.0) {
    throw ConfigError("row fractions must satisfy 0 < min < max <= 1");
  }
  if (noise_level < 0.0) throw ConfigError("noise_level must be >= 0");
}

namespace {

struct Candidate {
  double x;
  double y;
};

// Jittered grid whose pitch tracks the perspective value, walked from the
// near-horizon row downward. Jitter stays under half a cell so no two
// candidates coincide.
std::vector<Candidate> place_candidates(const SceneConfig& cfg, double pitch_scale,
                                        Rng& rng) {
  const double inv_span =
      1.0 / (cfg.camera.camera_height - cfg.camera.person_height);
  const double row_min = cfg.row_min_frac * cfg.height;
  const double row_max = cfg.row_max_frac * cfg.height;
  std::vector<Candidate> out;
  double r = row_min;
  while (r <= row_max) {
    const double pitch = std::max(pitch_scale * (r * inv_span), 1.5);
    const int n_cols = std::max(1, static_cast<int>(cfg.width / pitch));
    const double cell = static_cast<double>(cfg.width) / n_cols;
    for (int i = 0; i < n_cols; ++i) {
      const double jx = rng.uniform(-0.4, 0.4) * cell;
      const double jy = rng.uniform(-0.4, 0.4) * pitch;
      Candidate c;
      c.x = std::clamp((i + 0.5) * cell + jx, 0.5, cfg.width - 0.5);
      c.y = std::clamp(r + jy, row_min, std::min(row_max, cfg.height - 0.5));
      out.push_back(c);
    }
    r += pitch;
  }
  return out;
}

}  // namespace

AnnotatedScene generate_scene(const SceneConfig& cfg, std::uint64_t seed,
                              const std::string& id) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x5ce7e));

  const int target = rng.uniform_int(cfg.count_min, cfg.count_max);

  // Shrink the pitch until the grid offers at least `target` slots.
  double pitch_scale = cfg.spacing_scale;
  std::vector<Candidate> cand = place_candidates(cfg, pitch_scale, rng);
  for (int attempt = 0; static_cast<int>(cand.size()) < target && attempt < 12;
       ++attempt) {
    pitch_scale *= 0.8;
    cand = place_candidates(cfg, pitch_scale, rng);
  }
  if (static_cast<int>(cand.size()) < target) {
    throw ConfigError("cannot place requested head count; widen row span or "
                      "reduce spacing_scale");
  }

  // Uniform thinning keeps neighbor spacing proportional to the local pitch.
  std::vector<int> order(cand.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
    std::swap(order[i], order[rng.uniform_int(0, i)]);
  }

  AnnotatedScene scene;
  scene.id = id;
  scene.width = cfg.width;
  scene.height = cfg.height;
  scene.camera = cfg.camera;
  const double inv_span =
      1.0 / (cfg.camera.camera_height - cfg.camera.person_height);
  for (int i = 0; i < target; ++i) {
    const Candidate& c = cand[static_cast<std::size_t>(order[i])];
    scene.heads.push_back({c.x, c.y});
    scene.per_head_scale.push_back(cfg.blob_scale * (c.y * inv_span));
  }

  // Max-composited Gaussian blobs; max is order-independent, so rows can be
  // filled in parallel.
  scene.image = ValueMap(cfg.width, cfg.height);
  const int n = static_cast<int>(scene.heads.size());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < cfg.height; ++y) {
    for (int j = 0; j < n; ++j) {
      const double sigma = std::max(scene.per_head_scale[static_cast<std::size_t>(j)] * 0.5, 0.3);
      const double reach = 3.0 * sigma;
      const double dy = y - scene.heads[static_cast<std::size_t>(j)].y;
      if (dy < -reach || dy > reach) continue;
      const double hx = scene.heads[static_cast<std::size_t>(j)].x;
      const int x0 = std::max(0, static_cast<int>(std::floor(hx - reach)));
      const int x1 = std::min(cfg.width - 1, static_cast<int>(std::ceil(hx + reach)));
      const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - hx;
        const double v = std::exp(-(dx * dx + dy * dy) * inv2s2);
        double& px = scene.image.at(x, y);
        if (v > px) px = v;
      }
    }
  }

  if (cfg.noise_level > 0.0) {
    Rng noise(derive_seed(seed, 0x4015e));
    for (double& v : scene.image.values) {
      v = std::min(1.0, v + noise.uniform(0.0, cfg.noise_level));
    }
  }

  scene.validate();
  return scene;
}

std::vector<AnnotatedScene> generate_scenes(const SceneConfig& cfg,
                                            int n_scenes, std::uint64_t seed,
                                            const std::string& id_prefix) {
  if (n_scenes < 1) throw ConfigError("n_scenes must be >= 1");
  std::vector<AnnotatedScene> out;
  out.reserve(static_cast<std::size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%04d", id_prefix.c_str(), i);
    out.push_back(generate_scene(cfg, derive_seed(seed, static_cast<std::uint64_t>(i) + 1), buf));
  }
  return out;
}

}  // namespace pacnn
