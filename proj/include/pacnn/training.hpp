#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pacnn/config.hpp"
#include "pacnn/gt_maps.hpp"
#include "pacnn/losses.hpp"
#include "pacnn/model.hpp"
#include "pacnn/scene.hpp"
#include "pacnn/tanh_fit.hpp"

namespace pacnn {

struct TrainConfig {
  // Unset means auto: 1e-6 scaled by the ratio of the model's learnable
  // parameter count to the 14.7M-parameter conv stack the base rate was
  // tuned on. Conservative for small models; real runs usually set
  // train.learning_rate explicitly.
  std::optional<double> learning_rate;
  double momentum = 0.9;
  int epochs_phase1 = 100;
  int epochs_phase2 = 150;
  int batch_size = 1;  // the optimizer is strictly per-sample
  int crops_per_image = 9;
  std::uint64_t seed = 1;
  LossWeights weights;
  int ssim_window = 5;
  double ssim_sigma = 1.0;
  bool freeze_backbone_phase2 = false;

  static TrainConfig from_config(const KeyValueConfig& cfg);
  void validate() const;
};

double resolve_learning_rate(const TrainConfig& cfg, const Model& model);

struct TrainSample {
  std::string id;
  ValueMap image;
  GtBundle gt;
  double count = 0.0;  // annotated heads inside this sample
};

struct TrainDataset {
  std::vector<TrainSample> samples;
  double density_scale = 100.0;
  double perspective_scale = 1.0;  // 1 / dataset-wide GT perspective max
};

struct CropOffset {
  int x = 0;
  int y = 0;
};

// n half-size crops at seeded offsets, annotations translated and filtered
// to the crop. Cameras are dropped (their row origin no longer matches)
// and GT maps are regenerated downstream, never cropped. A scene smaller
// than twice the minimum network input is skipped with a stderr warning
// (empty result).
std::vector<AnnotatedScene> augment(const AnnotatedScene& scene, int n,
                                    std::uint64_t seed,
                                    std::vector<CropOffset>* offsets = nullptr);

// Builds supervision bundles for cfg.crops_per_image crops of every scene
// (crops_per_image = 0 trains on whole images). Density is rendered from
// the sample's own annotations; perspective comes from the parent scene's
// fitted profile evaluated at the crop's rows. fits runs parallel to
// scenes.
TrainDataset build_training_set(const std::vector<AnnotatedScene>& scenes,
                                const std::vector<TanhFitParams>& fits,
                                const DensityKernelConfig& kernel,
                                const TrainConfig& cfg, double density_scale,
                                double p_max);

struct EpochRecord {
  int epoch = 0;
  LossBreakdown mean;      // per-sample mean of the loss terms
  double train_mae = 0.0;  // mean absolute count error during the pass
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::string phase;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Density-only pretraining with the averaging combination. warm_start, if
// given, continues from those parameters (used for equal-budget baseline
// runs) instead of a fresh seeded init. Aborts with DivergenceError when a
// non-finite loss appears.
std::pair<Model, TrainReport> train_phase1(const TrainDataset& ds,
                                           const ModelConfig& mc,
                                           const TrainConfig& tc,
                                           std::ostream* log = nullptr,
                                           const Model* warm_start = nullptr);

// Joint fine-tuning with the perspective-weighted combination and the full
// objective. Gate midpoints start at the warm-start data's mean
// perspective values so the weighting begins unsaturated. epochs_phase2 = 0
// returns the (f32-quantized) warm start unchanged.
std::pair<Model, TrainReport> train_phase2(const TrainDataset& ds,
                                           const Model& warm_start,
                                           const TrainConfig& tc,
                                           std::ostream* log = nullptr);

// Equal-budget ablation arm: continues density-only averaging training for
// epochs_phase2 more epochs, drawing the same per-epoch sample orders as
// train_phase2 so a paired run differs only in the combination trained.
std::pair<Model, TrainReport> train_phase2_baseline(const TrainDataset& ds,
                                                    const Model& warm_start,
                                                    const TrainConfig& tc,
                                                    std::ostream* log = nullptr);

}  // namespace pacnn
