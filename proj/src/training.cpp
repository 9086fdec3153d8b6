#include "pacnn/training.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>

#include "pacnn/errors.hpp"
#include "pacnn/io.hpp"
#include "pacnn/rng.hpp"

namespace pacnn {

namespace {

constexpr double kRefConvParams = 14714688.0;

// Disjoint derive_seed stream bases; epoch indices are added to the phase
// bases, so phases stay separated for any epoch count below 2^20.
constexpr std::uint64_t kStreamInit = 0x11000000ull;
constexpr std::uint64_t kStreamPhase1 = 0x12000000ull;
constexpr std::uint64_t kStreamPhase2 = 0x13000000ull;
constexpr std::uint64_t kStreamAugment = 0x14000000ull;

}  // namespace

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
  TrainConfig t;
  const double lr = cfg.get_real("train.learning_rate", -1.0);
  if (lr >= 0.0) t.learning_rate = lr;
  t.momentum = cfg.get_real("train.momentum", t.momentum);
  t.epochs_phase1 = cfg.get_int("train.epochs_phase1", t.epochs_phase1);
  t.epochs_phase2 = cfg.get_int("train.epochs_phase2", t.epochs_phase2);
  t.batch_size = cfg.get_int("train.batch_size", t.batch_size);
  t.crops_per_image = cfg.get_int("train.crops_per_image", t.crops_per_image);
  t.seed = cfg.get_u64("train.seed", t.seed);
  t.weights = LossWeights::from_config(cfg);
  t.ssim_window = cfg.get_int("train.ssim_window", t.ssim_window);
  t.ssim_sigma = cfg.get_real("train.ssim_sigma", t.ssim_sigma);
  t.freeze_backbone_phase2 =
      cfg.get_bool("train.freeze_backbone_phase2", t.freeze_backbone_phase2);
  t.validate();
  return t;
}

void TrainConfig::validate() const {
  if (learning_rate.has_value() &&
      (!std::isfinite(*learning_rate) || *learning_rate < 0.0)) {
    throw ConfigError("learning rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0) || momentum >= 1.0) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (epochs_phase1 < 0 || epochs_phase2 < 0) {
    throw ConfigError("epoch counts must be >= 0");
  }
  if (batch_size != 1) {
    throw ConfigError("only batch size 1 is supported");
  }
  if (crops_per_image < 0) {
    throw ConfigError("crops_per_image must be >= 0");
  }
  if (ssim_window < 1 || ssim_window % 2 == 0) {
    throw ConfigError("ssim window must be odd and positive");
  }
  if (!(ssim_sigma > 0.0)) throw ConfigError("ssim sigma must be positive");
  weights.validate();
}

double resolve_learning_rate(const TrainConfig& cfg, const Model& model) {
  if (cfg.learning_rate.has_value()) return *cfg.learning_rate;
  const double n = static_cast<double>(model.learnable_param_count());
  return 1e-6 * n / kRefConvParams;
}

std::vector<AnnotatedScene> augment(const AnnotatedScene& scene, int n,
                                    std::uint64_t seed,
                                    std::vector<CropOffset>* offsets) {
  if (n < 0) throw ConfigError("crop count must be >= 0");
  if (offsets != nullptr) offsets->clear();
  if (n == 0) return {};
  const int cw = scene.width / 2;
  const int ch = scene.height / 2;
  if (cw < Model::kDivisor || ch < Model::kDivisor) {
    std::cerr << "warning: scene " << scene.id << " (" << scene.width << "x"
              << scene.height << ") is smaller than twice the minimum "
              << 2 * Model::kDivisor << "x" << 2 * Model::kDivisor
              << " network input; skipping augmentation\n";
    return {};
  }
  Rng rng(seed);
  std::vector<AnnotatedScene> crops;
  crops.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const int ox = rng.uniform_int(0, scene.width - cw);
    const int oy = rng.uniform_int(0, scene.height - ch);
    AnnotatedScene c;
    c.id = scene.id + "#" + std::to_string(k);
    c.width = cw;
    c.height = ch;
    for (std::size_t i = 0; i < scene.heads.size(); ++i) {
      const double x = scene.heads[i].x - ox;
      const double y = scene.heads[i].y - oy;
      if (x >= 0.0 && x < cw && y >= 0.0 && y < ch) {
        c.heads.push_back({x, y});
        if (i < scene.per_head_scale.size()) {
          c.per_head_scale.push_back(scene.per_head_scale[i]);
        }
      }
    }
    if (!scene.image.empty()) {
      c.image = ValueMap(cw, ch);
      for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
          c.image.at(x, y) = scene.image.at(x + ox, y + oy);
        }
      }
    }
    if (scene.roi.has_value()) {
      ValueMap r(cw, ch);
      for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
          r.at(x, y) = scene.roi->at(x + ox, y + oy);
        }
      }
      c.roi = std::move(r);
    }
    c.validate();
    crops.push_back(std::move(c));
    if (offsets != nullptr) offsets->push_back({ox, oy});
  }
  return crops;
}

namespace {

TrainSample make_sample(const AnnotatedScene& scene, const TanhFitParams& fit,
                        int row_offset, const DensityKernelConfig& kernel,
                        double density_scale, double p_max) {
  TrainSample s;
  s.id = scene.id;
  s.image = scene.image;
  s.count = static_cast<double>(scene.heads.size());
  ValueMap density = render_density_map(scene, kernel);
  ValueMap perspective =
      render_perspective_map(fit, scene.width, scene.height, 1e-3, row_offset);
  // The model zero-pads inputs up to the next /32 boundary; supervision
  // targets must be built on the same grid. Zero padding keeps density
  // mass intact; the perspective profile extends by replication.
  const int d = Model::kDivisor;
  const int pw = scene.width + (d - scene.width % d) % d;
  const int ph = scene.height + (d - scene.height % d) % d;
  if (pw != scene.width || ph != scene.height) {
    density = pad_map(density, pw, ph, PadMode::kZero);
    perspective = pad_map(perspective, pw, ph, PadMode::kEdge);
  }
  s.gt = make_gt_bundle(density, perspective, density_scale, 1.0 / p_max);
  return s;
}

}  // namespace

TrainDataset build_training_set(const std::vector<AnnotatedScene>& scenes,
                                const std::vector<TanhFitParams>& fits,
                                const DensityKernelConfig& kernel,
                                const TrainConfig& cfg, double density_scale,
                                double p_max) {
  if (scenes.size() != fits.size()) {
    throw ConfigError("scene and fit lists differ in length");
  }
  if (!(density_scale > 0.0) || !(p_max > 0.0)) {
    throw ConfigError("normalization scales must be positive");
  }
  TrainDataset ds;
  ds.density_scale = density_scale;
  ds.perspective_scale = 1.0 / p_max;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (cfg.crops_per_image == 0) {
      ds.samples.push_back(make_sample(scenes[i], fits[i], 0, kernel,
                                       density_scale, p_max));
      continue;
    }
    std::vector<CropOffset> offsets;
    const std::vector<AnnotatedScene> crops =
        augment(scenes[i], cfg.crops_per_image,
                derive_seed(cfg.seed, kStreamAugment + i), &offsets);
    for (std::size_t k = 0; k < crops.size(); ++k) {
      ds.samples.push_back(make_sample(crops[k], fits[i], offsets[k].y,
                                       kernel, density_scale, p_max));
    }
  }
  if (ds.samples.empty()) {
    throw InsufficientDataError("no usable training samples after cropping");
  }
  return ds;
}

namespace {

struct SgdState {
  double lr = 0.0;
  double momentum = 0.9;
  bool freeze_trunk = false;
  std::vector<std::vector<double>> velocity;  // parallels params().all()

  SgdState(const Model& model, double lr_, double momentum_, bool freeze)
      : lr(lr_), momentum(momentum_), freeze_trunk(freeze) {
    velocity.reserve(model.params().all().size());
    for (const LayerParam& p : model.params().all()) {
      velocity.emplace_back(p.learnable ? p.t.size() : 0, 0.0);
    }
  }

  void step(Model& model) {
    auto& params = model.params().all();
    for (std::size_t i = 0; i < params.size(); ++i) {
      LayerParam& p = params[i];
      if (!p.learnable) continue;
      if (freeze_trunk && p.id.rfind("trunk.", 0) == 0) continue;
      std::vector<double>& v = velocity[i];
      for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] = momentum * v[j] - lr * p.t.g[j];
        p.t.v[j] += v[j];
      }
    }
  }
};

void add_breakdown(LossBreakdown& acc, const LossBreakdown& b) {
  acc.total += b.total;
  acc.d_e += b.d_e;
  acc.p_e += b.p_e;
  acc.p_es += b.p_es;
  acc.d_e1 += b.d_e1;
  acc.d_e2 += b.d_e2;
  acc.d_e3 += b.d_e3;
}

void scale_breakdown(LossBreakdown& b, double s) {
  b.total *= s;
  b.d_e *= s;
  b.p_e *= s;
  b.p_es *= s;
  b.d_e1 *= s;
  b.d_e2 *= s;
  b.d_e3 *= s;
}

std::string divergence_report(const char* phase, int epoch,
                              const std::string& sample_id,
                              const LossBreakdown& b) {
  std::ostringstream os;
  os << "training diverged: phase=" << phase << " epoch=" << epoch
     << " sample=" << sample_id << " total=" << b.total << " d_e=" << b.d_e
     << " p_e=" << b.p_e << " p_es=" << b.p_es << " d_e1=" << b.d_e1
     << " d_e2=" << b.d_e2 << " d_e3=" << b.d_e3;
  return os.str();
}

void log_epoch(std::ostream* log, const char* phase, const EpochRecord& r) {
  if (log == nullptr) return;
  (*log) << "phase=" << phase << " epoch=" << r.epoch
         << " total=" << r.mean.total << " d_e=" << r.mean.d_e
         << " d_e1=" << r.mean.d_e1 << " d_e2=" << r.mean.d_e2
         << " d_e3=" << r.mean.d_e3 << " p_e=" << r.mean.p_e
         << " p_es=" << r.mean.p_es << " train_mae=" << r.train_mae << "\n";
}

TrainReport run_sgd(Model& model, const TrainDataset& ds,
                    const TrainConfig& tc, CombineMode mode,
                    bool with_perspective, int epochs,
                    std::uint64_t epoch_stream, const char* phase,
                    std::ostream* log) {
  const auto started = std::chrono::steady_clock::now();
  TrainReport report;
  report.phase = phase;
  report.seed = tc.seed;

  SsimConfig ssim;
  ssim.window = tc.ssim_window;
  ssim.sigma = tc.ssim_sigma;

  SgdState sgd(model, resolve_learning_rate(tc, model), tc.momentum,
               tc.freeze_backbone_phase2 && mode == CombineMode::kPerspective);

  const std::size_t n = ds.samples.size();
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle(derive_seed(tc.seed, epoch_stream + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(
          shuffle.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    double abs_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const TrainSample& sample = ds.samples[order[i]];
      const MultiScaleOutputs out = model.forward(sample.image, mode);
      OutputGrads grads;
      const LossBreakdown b = composite_loss(out, sample.gt, tc.weights,
                                             ssim, with_perspective, &grads);
      if (!std::isfinite(b.total)) {
        throw DivergenceError(divergence_report(phase, epoch, sample.id, b));
      }
      model.params().zero_grads();
      model.backward(grads);
      sgd.step(model);
      add_breakdown(rec.mean, b);
      abs_err += std::abs(out.d_e.total() / ds.density_scale - sample.count);
    }
    scale_breakdown(rec.mean, 1.0 / static_cast<double>(n));
    rec.train_mae = abs_err / static_cast<double>(n);
    log_epoch(log, phase, rec);
    report.epochs.push_back(rec);
  }

  if (!report.epochs.empty()) {
    report.initial_loss = report.epochs.front().mean.total;
    report.final_loss = report.epochs.back().mean.total;
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return report;
}

}  // namespace

std::pair<Model, TrainReport> train_phase1(const TrainDataset& ds,
                                           const ModelConfig& mc,
                                           const TrainConfig& tc,
                                           std::ostream* log,
                                           const Model* warm_start) {
  tc.validate();
  if (ds.samples.empty()) throw InsufficientDataError("empty training set");
  Model model = warm_start != nullptr ? *warm_start : Model(mc);
  if (warm_start == nullptr) {
    model.init_params(derive_seed(tc.seed, kStreamInit));
  } else {
    quantize_params_f32(model.params());
  }
  TrainReport report =
      run_sgd(model, ds, tc, CombineMode::kAverage, false, tc.epochs_phase1,
              kStreamPhase1, "1", log);
  return {std::move(model), std::move(report)};
}

std::pair<Model, TrainReport> train_phase2(const TrainDataset& ds,
                                           const Model& warm_start,
                                           const TrainConfig& tc,
                                           std::ostream* log) {
  tc.validate();
  if (ds.samples.empty()) throw InsufficientDataError("empty training set");
  Model model = warm_start;
  // Start from exactly what a saved phase-1 checkpoint would reload as.
  quantize_params_f32(model.params());

  const GtBundle& first = ds.samples.front().gt;
  if (first.p8.empty() || first.p16.empty()) {
    throw ConfigError("phase 2 needs perspective targets in the gt bundle");
  }
  const double n16 = static_cast<double>(first.p16.size());
  const double n8 = static_cast<double>(first.p8.size());
  model.set_pa_inner({1.0, first.p16.total() / n16});
  model.set_pa_outer({1.0, first.p8.total() / n8});

  TrainReport report =
      run_sgd(model, ds, tc, CombineMode::kPerspective, true,
              tc.epochs_phase2, kStreamPhase2, "2", log);
  return {std::move(model), std::move(report)};
}

std::pair<Model, TrainReport> train_phase2_baseline(const TrainDataset& ds,
                                                    const Model& warm_start,
                                                    const TrainConfig& tc,
                                                    std::ostream* log) {
  tc.validate();
  if (ds.samples.empty()) throw InsufficientDataError("empty training set");
  Model model = warm_start;
  quantize_params_f32(model.params());
  TrainReport report =
      run_sgd(model, ds, tc, CombineMode::kAverage, false, tc.epochs_phase2,
              kStreamPhase2, "2b", log);
  return {std::move(model), std::move(report)};
}

}  // namespace pacnn
