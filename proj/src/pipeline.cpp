#include "pacnn/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "pacnn/errors.hpp"
#include "pacnn/io.hpp"

namespace pacnn {

void generate_dataset(const std::string& dir, const SceneConfig& cfg, int n,
                      std::uint64_t seed, const std::string& id_prefix) {
  if (n < 1) throw ConfigError("dataset needs at least one scene");
  const std::vector<AnnotatedScene> scenes =
      generate_scenes(cfg, n, seed, id_prefix);
  save_dataset(dir, scenes);
}

GtGenConfig GtGenConfig::from_config(const KeyValueConfig& cfg) {
  GtGenConfig g;
  g.kernel = DensityKernelConfig::from_config(cfg);
  g.fit.max_iterations = cfg.get_int("fit.max_iterations", g.fit.max_iterations);
  g.fit.restarts = cfg.get_int("fit.restarts", g.fit.restarts);
  g.fit.tolerance = cfg.get_real("fit.tolerance", g.fit.tolerance);
  g.fit.seed = cfg.get_u64("fit.seed", g.fit.seed);
  g.scale_k = cfg.get_int("gt.scale_k", g.scale_k);
  g.row_bin = cfg.get_int("gt.row_bin", g.row_bin);
  g.density_scale = cfg.get_real("gt.density_scale", g.density_scale);
  g.validate();
  return g;
}

void GtGenConfig::validate() const {
  kernel.validate();
  if (scale_k < 1) throw ConfigError("gt.scale_k must be >= 1");
  if (row_bin < 1) throw ConfigError("gt.row_bin must be >= 1");
  if (!(density_scale > 0.0)) {
    throw ConfigError("gt.density_scale must be positive");
  }
}

TanhFitParams fit_scene_profile(const AnnotatedScene& scene,
                                const GtGenConfig& cfg) {
  const std::vector<PerspectiveSample> raw =
      knn_head_scales(scene, cfg.scale_k);
  std::vector<PerspectiveSample> samples =
      row_mean_samples(raw, cfg.row_bin);
  if (samples.size() < 3) samples = raw;
  return fit_tanh(samples, cfg.fit);
}

GtGenResult generate_gt(const std::string& dir, const GtGenConfig& cfg) {
  cfg.validate();
  const std::vector<AnnotatedScene> scenes = load_dataset(dir);
  if (scenes.empty()) throw InsufficientDataError("dataset has no scenes");

  std::vector<SceneFit> fits;
  fits.reserve(scenes.size());
  double p_max = 0.0;
  for (const AnnotatedScene& s : scenes) {
    const ValueMap density = render_density_map(s, cfg.kernel);
    write_map(dir + "/gt/density/" + s.id + ".pacm", density);

    TanhFitParams fit;
    try {
      fit = fit_scene_profile(s, cfg);
    } catch (const Error& e) {
      throw InsufficientDataError("scene " + s.id +
                                  ": perspective fit failed: " + e.what());
    }
    const ValueMap persp =
        render_perspective_map(fit, s.width, s.height, 1e-3, 0);
    write_map(dir + "/gt/perspective/" + s.id + ".pacm", persp);
    p_max = std::max(p_max, persp.max_value());
    fits.push_back({s.id, fit});
  }
  write_fits(dir + "/gt/fits.jsonl", fits);
  GtMeta meta;
  meta.p_max = p_max;
  meta.density_scale = cfg.density_scale;
  write_gt_meta(dir + "/gt/meta.json", meta);

  GtGenResult res;
  res.scenes = static_cast<int>(scenes.size());
  res.p_max = p_max;
  return res;
}

void apply_checkpoint(Model& model, const ParamStore& stored) {
  for (LayerParam& p : model.params().all()) {
    const LayerParam* s = stored.find(p.id);
    if (s == nullptr) {
      throw IoError("checkpoint is missing parameter " + p.id);
    }
    if (s->t.channels != p.t.channels || s->t.height != p.t.height ||
        s->t.width != p.t.width) {
      throw IoError("checkpoint shape mismatch for " + p.id);
    }
    p.t.v = s->t.v;
  }
}

NormScales norm_scales_from(const ParamStore& stored) {
  NormScales n;
  if (const LayerParam* p = stored.find("norm.density_scale")) {
    n.density_scale = p->t.v[0];
  }
  if (const LayerParam* p = stored.find("norm.perspective_scale")) {
    n.perspective_scale = p->t.v[0];
  }
  return n;
}

void record_norm_scales(ParamStore& params, const NormScales& scales) {
  auto set = [&](const char* id, double v) {
    LayerParam* p = params.find(id);
    if (p == nullptr) p = &params.add(id, 1, 1, 1, false);
    p->t.v[0] = v;
    p->learnable = false;
  };
  set("norm.density_scale", scales.density_scale);
  set("norm.perspective_scale", scales.perspective_scale);
}

namespace {

std::vector<TanhFitParams> fits_for_scenes(
    const std::vector<AnnotatedScene>& scenes,
    const std::vector<SceneFit>& fits) {
  std::vector<TanhFitParams> out;
  out.reserve(scenes.size());
  for (const AnnotatedScene& s : scenes) {
    const auto it = std::find_if(
        fits.begin(), fits.end(),
        [&](const SceneFit& f) { return f.id == s.id; });
    if (it == fits.end()) {
      throw IoError("gt/fits.jsonl has no entry for scene " + s.id);
    }
    out.push_back(it->fit);
  }
  return out;
}

}  // namespace

PipelineResult train_pipeline(const std::string& data_dir,
                              const ModelConfig& mc, const TrainConfig& tc,
                              const DensityKernelConfig& kernel,
                              const std::string& out_dir, bool pa,
                              std::ostream* log) {
  const std::vector<AnnotatedScene> scenes = load_dataset(data_dir);
  const std::vector<SceneFit> fits = read_fits(data_dir + "/gt/fits.jsonl");
  const GtMeta meta = read_gt_meta(data_dir + "/gt/meta.json");

  const TrainDataset ds =
      build_training_set(scenes, fits_for_scenes(scenes, fits), kernel, tc,
                         meta.density_scale, meta.p_max);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  std::ofstream log_file(out_dir + "/train.log");
  if (!log_file) throw IoError("cannot open " + out_dir + "/train.log");
  std::ostream* sink = log != nullptr ? log : &log_file;

  PipelineResult res;
  auto [m1, rep1] = train_phase1(ds, mc, tc, sink);
  res.phase1 = std::move(rep1);
  const NormScales scales{ds.density_scale, ds.perspective_scale};
  record_norm_scales(m1.params(), scales);
  res.phase1_checkpoint = out_dir + "/phase1.pacp";
  write_checkpoint(res.phase1_checkpoint, m1.params());

  auto [m2, rep2] = pa ? train_phase2(ds, m1, tc, sink)
                       : train_phase2_baseline(ds, m1, tc, sink);
  res.phase2 = std::move(rep2);
  record_norm_scales(m2.params(), scales);
  res.final_checkpoint = out_dir + "/final.pacp";
  write_checkpoint(res.final_checkpoint, m2.params());
  return res;
}

CountMetrics evaluate_dataset(const std::string& data_dir,
                              const ModelConfig& mc,
                              const std::string& checkpoint_path,
                              CombineMode mode,
                              std::vector<SceneCount>* per_scene) {
  const std::vector<AnnotatedScene> scenes = load_dataset(data_dir);
  const ParamStore stored = read_checkpoint(checkpoint_path);
  Model model(mc);
  apply_checkpoint(model, stored);
  const NormScales scales = norm_scales_from(stored);
  return evaluate(model, scenes, mode, scales.density_scale, per_scene);
}

}  // namespace pacnn
