#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pacnn/gt_maps.hpp"
#include "pacnn/metrics.hpp"
#include "pacnn/scene.hpp"
#include "pacnn/tanh_fit.hpp"
#include "pacnn/training.hpp"

namespace pacnn {

// Generates n seeded scenes and writes the dataset directory layout
// (annotations.jsonl plus images/).
void generate_dataset(const std::string& dir, const SceneConfig& cfg, int n,
                      std::uint64_t seed,
                      const std::string& id_prefix = "scene");

struct GtGenConfig {
  DensityKernelConfig kernel;
  TanhFitOptions fit;
  int scale_k = 3;    // neighbours for the head-spacing samples
  int row_bin = 4;    // row height for sample aggregation
  double density_scale = 100.0;

  static GtGenConfig from_config(const KeyValueConfig& cfg);
  void validate() const;
};

struct GtGenResult {
  int scenes = 0;
  double p_max = 1.0;
};

// Tanh profile for one scene: K-NN head spacings, row-aggregated, then
// fitted. When row binning leaves fewer than three samples the unbinned
// samples are fitted directly.
TanhFitParams fit_scene_profile(const AnnotatedScene& scene,
                                const GtGenConfig& cfg);

// Renders density and perspective targets for every scene in the dataset,
// writing gt/density/, gt/perspective/, gt/fits.jsonl and gt/meta.json.
GtGenResult generate_gt(const std::string& dir, const GtGenConfig& cfg);

// Copies checkpoint values into the model's parameters by id. Records the
// model does not know (run metadata such as norm.*) are ignored; missing
// or mis-shaped model parameters raise IoError.
void apply_checkpoint(Model& model, const ParamStore& stored);

// Normalization scales recorded in a checkpoint, with the documented
// defaults when the records are absent.
struct NormScales {
  double density_scale = 100.0;
  double perspective_scale = 1.0;
};

NormScales norm_scales_from(const ParamStore& stored);
void record_norm_scales(ParamStore& params, const NormScales& scales);

struct PipelineResult {
  TrainReport phase1;
  TrainReport phase2;
  std::string phase1_checkpoint;
  std::string final_checkpoint;
};

// Full two-phase run over a prepared dataset directory: builds the crop
// training set (kernel regenerates per-crop density), trains phase 1,
// saves phase1.pacp, then either the perspective-weighted phase 2
// (pa = true) or the equal-budget averaging continuation (pa = false),
// saving final.pacp and train.log in out_dir.
PipelineResult train_pipeline(const std::string& data_dir,
                              const ModelConfig& mc, const TrainConfig& tc,
                              const DensityKernelConfig& kernel,
                              const std::string& out_dir, bool pa,
                              std::ostream* log = nullptr);

// Whole-image evaluation of a checkpoint over a dataset directory (only
// annotations and images are needed, not GT maps).
CountMetrics evaluate_dataset(const std::string& data_dir,
                              const ModelConfig& mc,
                              const std::string& checkpoint_path,
                              CombineMode mode,
                              std::vector<SceneCount>* per_scene = nullptr);

}  // namespace pacnn
