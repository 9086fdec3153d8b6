#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "pacnn/errors.hpp"
#include "pacnn/gt_maps.hpp"
#include "pacnn/io.hpp"
#include "pacnn/model.hpp"
#include "pacnn/scene.hpp"
#include "pacnn/tanh_fit.hpp"
#include "pacnn/training.hpp"

using namespace pacnn;

namespace {

ModelConfig tiny_model() {
  ModelConfig mc;
  mc.block_widths = {3, 4, 4, 4};
  mc.block_depths = {1, 1, 1, 1};
  mc.scale_branch_depth = 1;
  mc.persp_branch_depth = 1;
  mc.activation = "softplus";
  return mc;
}

std::vector<AnnotatedScene> small_scenes(int n, std::uint64_t seed) {
  SceneConfig sc;
  sc.width = 64;
  sc.height = 64;
  sc.count_min = 6;
  sc.count_max = 10;
  sc.blob_scale = 1.2;
  sc.spacing_scale = 2.4;
  return generate_scenes(sc, n, seed, "tr");
}

TrainDataset small_dataset(int n_scenes, int crops, std::uint64_t seed) {
  const auto scenes = small_scenes(n_scenes, seed);
  TanhFitParams profile;
  profile.a = 8.0;
  profile.b = 0.05;
  profile.c = 5.0;
  const std::vector<TanhFitParams> fits(scenes.size(), profile);
  TrainConfig tc;
  tc.crops_per_image = crops;
  tc.seed = seed;
  return build_training_set(scenes, fits, DensityKernelConfig{}, tc, 100.0,
                            8.0);
}

bool params_equal(const ParamStore& a, const ParamStore& b) {
  if (a.all().size() != b.all().size()) return false;
  for (std::size_t i = 0; i < a.all().size(); ++i) {
    if (a.all()[i].id != b.all()[i].id) return false;
    if (a.all()[i].t.v != b.all()[i].t.v) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("augment produces contained half-size crops") {
  const auto scene = small_scenes(1, 3).front();
  std::vector<CropOffset> offsets;
  const auto crops = augment(scene, 4, 17, &offsets);
  REQUIRE(crops.size() == 4);
  REQUIRE(offsets.size() == 4);

  for (std::size_t k = 0; k < crops.size(); ++k) {
    const auto& c = crops[k];
    CHECK(c.width == scene.width / 2);
    CHECK(c.height == scene.height / 2);
    CHECK(c.id == scene.id + "#" + std::to_string(k));
    CHECK(!c.camera.has_value());  // crop rows no longer match the horizon
    CHECK(offsets[k].x >= 0);
    CHECK(offsets[k].x <= scene.width - c.width);
    CHECK(offsets[k].y >= 0);
    CHECK(offsets[k].y <= scene.height - c.height);

    // Heads are exactly the parent heads inside the crop box, translated.
    std::size_t want = 0;
    for (const auto& h : scene.heads) {
      const double x = h.x - offsets[k].x;
      const double y = h.y - offsets[k].y;
      if (x >= 0.0 && x < c.width && y >= 0.0 && y < c.height) ++want;
    }
    CHECK(c.heads.size() == want);
    for (const auto& h : c.heads) {
      CHECK(h.x >= 0.0);
      CHECK(h.x < c.width);
      CHECK(h.y >= 0.0);
      CHECK(h.y < c.height);
    }

    // Image pixels come straight from the parent window.
    CHECK(c.image.at(3, 5) ==
          scene.image.at(3 + offsets[k].x, 5 + offsets[k].y));
    c.validate();
  }
}

TEST_CASE("augment determinism and edge cases") {
  const auto scene = small_scenes(1, 4).front();
  std::vector<CropOffset> o1, o2;
  const auto a = augment(scene, 3, 23, &o1);
  const auto b = augment(scene, 3, 23, &o2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.values == b[i].image.values);
    CHECK(o1[i].x == o2[i].x);
    CHECK(o1[i].y == o2[i].y);
  }

  CHECK(augment(scene, 0, 1).empty());
  CHECK_THROWS_AS(augment(scene, -1, 1), ConfigError);

  // Half of 48 is below the 32-pixel network floor: skipped, not thrown.
  AnnotatedScene tiny = scene;
  tiny.width = 48;
  tiny.height = 48;
  tiny.heads.clear();
  tiny.per_head_scale.clear();
  tiny.image = ValueMap(48, 48, 0.1);
  CHECK(augment(tiny, 5, 1).empty());
}

TEST_CASE("training set carries per-crop supervision") {
  const TrainDataset ds = small_dataset(3, 2, 9);
  CHECK(ds.samples.size() == 6);
  CHECK(ds.density_scale == 100.0);
  CHECK(ds.perspective_scale == doctest::Approx(1.0 / 8.0).epsilon(1e-12));

  for (const auto& s : ds.samples) {
    CHECK(s.image.width == 32);
    CHECK(s.image.height == 32);
    CHECK(s.gt.d8.width == 4);
    CHECK(s.gt.d16.width == 2);
    CHECK(s.gt.d32.width == 1);
    CHECK(s.gt.p8.width == 4);
    CHECK(s.gt.p16.width == 2);
    // Density carries count * density_scale mass, regenerated per crop.
    CHECK(s.gt.d8.total() ==
          doctest::Approx(100.0 * s.count).epsilon(1e-6).scale(100.0));
    CHECK(s.gt.d32.total() == doctest::Approx(s.gt.d8.total()).epsilon(1e-12));
  }

  // Whole-image mode: one sample per scene at full extent.
  const TrainDataset whole = small_dataset(2, 0, 9);
  CHECK(whole.samples.size() == 2);
  CHECK(whole.samples[0].image.width == 64);
  CHECK(whole.samples[0].gt.d8.width == 8);
}

TEST_CASE("learning rate resolves explicitly or by parameter ratio") {
  Model m(tiny_model());
  m.init_params(1);
  TrainConfig tc;
  tc.learning_rate = 3e-4;
  CHECK(resolve_learning_rate(tc, m) == 3e-4);

  tc.learning_rate.reset();
  const double n = static_cast<double>(m.learnable_param_count());
  CHECK(resolve_learning_rate(tc, m) ==
        doctest::Approx(1e-6 * n / 14714688.0).epsilon(1e-12));
}

TEST_CASE("train config keys and validation") {
  const KeyValueConfig cfg = KeyValueConfig::parse_string(
      "train.learning_rate = 0.001\n"
      "train.momentum = 0.8\n"
      "train.epochs_phase1 = 3\n"
      "train.epochs_phase2 = 4\n"
      "train.crops_per_image = 5\n"
      "train.seed = 42\n"
      "train.freeze_backbone_phase2 = true\n");
  const TrainConfig tc = TrainConfig::from_config(cfg);
  CHECK(tc.learning_rate.has_value());
  CHECK(*tc.learning_rate == 0.001);
  CHECK(tc.momentum == 0.8);
  CHECK(tc.epochs_phase1 == 3);
  CHECK(tc.epochs_phase2 == 4);
  CHECK(tc.crops_per_image == 5);
  CHECK(tc.seed == 42);
  CHECK(tc.freeze_backbone_phase2);

  // Absent key means auto.
  const TrainConfig d = TrainConfig::from_config(KeyValueConfig::parse_string(""));
  CHECK(!d.learning_rate.has_value());

  TrainConfig bad;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.batch_size = 2;  // the optimizer is strictly per-sample
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.epochs_phase2 = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("zero phase-1 epochs returns the seeded init untouched") {
  const TrainDataset ds = small_dataset(1, 2, 31);
  TrainConfig tc;
  tc.epochs_phase1 = 0;
  tc.seed = 5;
  auto [m1, r1] = train_phase1(ds, tiny_model(), tc);
  auto [m2, r2] = train_phase1(ds, tiny_model(), tc);
  CHECK(r1.epochs.empty());
  CHECK(r1.phase == "1");
  CHECK(params_equal(m1.params(), m2.params()));
}

TEST_CASE("zero learning rate moves nothing") {
  const TrainDataset ds = small_dataset(1, 1, 37);
  Model warm(tiny_model());
  warm.init_params(12);

  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.epochs_phase1 = 1;
  auto [trained, rep] = train_phase1(ds, tiny_model(), tc, nullptr, &warm);
  REQUIRE(rep.epochs.size() == 1);

  Model expect = warm;
  quantize_params_f32(expect.params());
  CHECK(params_equal(trained.params(), expect.params()));
}

TEST_CASE("training is bit identical for a fixed seed") {
  const TrainDataset ds = small_dataset(2, 1, 41);
  TrainConfig tc;
  tc.learning_rate = 1e-6;
  tc.epochs_phase1 = 2;
  tc.seed = 7;
  auto [a, ra] = train_phase1(ds, tiny_model(), tc);
  auto [b, rb] = train_phase1(ds, tiny_model(), tc);
  CHECK(params_equal(a.params(), b.params()));
  REQUIRE(ra.epochs.size() == rb.epochs.size());
  for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
    CHECK(ra.epochs[i].mean.total == rb.epochs[i].mean.total);
    CHECK(ra.epochs[i].train_mae == rb.epochs[i].train_mae);
  }

  tc.seed = 8;
  auto [c, rc] = train_phase1(ds, tiny_model(), tc);
  CHECK(!params_equal(a.params(), c.params()));
}

TEST_CASE("short training run lowers the objective") {
  const TrainDataset ds = small_dataset(2, 1, 43);
  TrainConfig tc;
  tc.learning_rate = 2e-7;
  tc.epochs_phase1 = 4;
  auto [m, rep] = train_phase1(ds, tiny_model(), tc);
  REQUIRE(rep.epochs.size() == 4);
  CHECK(rep.final_loss <= rep.initial_loss);
  CHECK(rep.wall_seconds > 0.0);
  for (const auto& e : rep.epochs) CHECK(std::isfinite(e.mean.total));
}

TEST_CASE("divergence aborts with a structured report") {
  const TrainDataset ds = small_dataset(1, 1, 47);
  TrainConfig tc;
  tc.learning_rate = 1e12;
  tc.epochs_phase1 = 50;
  try {
    train_phase1(ds, tiny_model(), tc);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("training diverged") != std::string::npos);
    CHECK(msg.find("phase=1") != std::string::npos);
    CHECK(msg.find("epoch=") != std::string::npos);
    CHECK(msg.find("sample=") != std::string::npos);
    CHECK(msg.find("total=") != std::string::npos);
  }
}

TEST_CASE("phase 2 seeds its gates from the first sample's targets") {
  const TrainDataset ds = small_dataset(1, 2, 53);
  Model warm(tiny_model());
  warm.init_params(19);

  TrainConfig tc;
  tc.epochs_phase2 = 0;
  auto [m, rep] = train_phase2(ds, warm, tc);
  CHECK(rep.epochs.empty());
  CHECK(rep.phase == "2");

  const GtBundle& first = ds.samples.front().gt;
  CHECK(m.pa_inner().alpha == 1.0);
  CHECK(m.pa_outer().alpha == 1.0);
  CHECK(m.pa_inner().beta ==
        doctest::Approx(first.p16.total() / first.p16.size()).epsilon(1e-12));
  CHECK(m.pa_outer().beta ==
        doctest::Approx(first.p8.total() / first.p8.size()).epsilon(1e-12));

  // Everything else is the checkpoint-quantized warm start.
  Model expect = warm;
  quantize_params_f32(expect.params());
  for (const auto& p : expect.params().all()) {
    if (p.id.rfind("pa.", 0) == 0) continue;
    CHECK(m.params().at(p.id).t.v == p.t.v);
  }
}

TEST_CASE("frozen backbone leaves trunk parameters untouched") {
  const TrainDataset ds = small_dataset(1, 2, 59);
  Model warm(tiny_model());
  warm.init_params(21);

  TrainConfig tc;
  tc.learning_rate = 1e-5;
  tc.epochs_phase2 = 1;
  tc.freeze_backbone_phase2 = true;
  auto [m, rep] = train_phase2(ds, warm, tc);

  Model quant = warm;
  quantize_params_f32(quant.params());
  bool some_nontrunk_moved = false;
  for (const auto& p : quant.params().all()) {
    if (!p.learnable) continue;
    if (p.id.rfind("trunk.", 0) == 0) {
      CHECK(m.params().at(p.id).t.v == p.t.v);
    } else if (m.params().at(p.id).t.v != p.t.v) {
      some_nontrunk_moved = true;
    }
  }
  CHECK(some_nontrunk_moved);
}

TEST_CASE("baseline arm trains the averaging combination on phase-2 budget") {
  const TrainDataset ds = small_dataset(1, 2, 61);
  Model warm(tiny_model());
  warm.init_params(23);

  TrainConfig tc;
  tc.learning_rate = 1e-6;
  tc.epochs_phase2 = 1;
  auto [m, rep] = train_phase2_baseline(ds, warm, tc);
  CHECK(rep.phase == "2b");
  REQUIRE(rep.epochs.size() == 1);
  CHECK(std::isfinite(rep.final_loss));

  // Gates stay at their defaults; the baseline never touches them.
  CHECK(m.pa_inner().alpha == warm.pa_inner().alpha);
  CHECK(m.pa_outer().beta == warm.pa_outer().beta);
}

TEST_CASE("empty training sets are rejected") {
  TrainDataset empty;
  TrainConfig tc;
  CHECK_THROWS_AS(train_phase1(empty, tiny_model(), tc), InsufficientDataError);
  Model warm(tiny_model());
  warm.init_params(2);
  CHECK_THROWS_AS(train_phase2(empty, warm, tc), InsufficientDataError);
  CHECK_THROWS_AS(train_phase2_baseline(empty, warm, tc),
                  InsufficientDataError);
}
