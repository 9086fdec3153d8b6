#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pacnn/errors.hpp"
#include "pacnn/scene.hpp"

using namespace pacnn;

TEST_CASE("degenerate count range pins the head count") {
  SceneConfig cfg;
  cfg.count_min = 5;
  cfg.count_max = 5;
  const AnnotatedScene s = generate_scene(cfg, 42);
  CHECK(s.heads.size() == 5);
  CHECK(s.per_head_scale.size() == 5);
}

TEST_CASE("same config and seed reproduce the scene bit for bit") {
  SceneConfig cfg;
  cfg.count_min = 10;
  cfg.count_max = 30;
  const AnnotatedScene a = generate_scene(cfg, 7);
  const AnnotatedScene b = generate_scene(cfg, 7);
  REQUIRE(a.heads.size() == b.heads.size());
  for (std::size_t i = 0; i < a.heads.size(); ++i) {
    CHECK(a.heads[i].x == b.heads[i].x);
    CHECK(a.heads[i].y == b.heads[i].y);
  }
  REQUIRE(a.image.values.size() == b.image.values.size());
  CHECK(a.image.values == b.image.values);
  CHECK(a.per_head_scale == b.per_head_scale);

  const AnnotatedScene c = generate_scene(cfg, 8);
  CHECK(a.heads.size() != c.heads.size());
}

TEST_CASE("head scale grows toward the image bottom") {
  SceneConfig cfg;
  cfg.count_min = 20;
  cfg.count_max = 40;
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
    const AnnotatedScene s = generate_scene(cfg, seed);
    for (std::size_t i = 0; i < s.heads.size(); ++i) {
      for (std::size_t j = 0; j < s.heads.size(); ++j) {
        if (s.heads[i].y < s.heads[j].y) {
          CHECK(s.per_head_scale[i] <= s.per_head_scale[j]);
        }
      }
    }
  }
}

TEST_CASE("scenes validate and stay inside the frame") {
  SceneConfig cfg;
  cfg.width = 48;
  cfg.height = 80;
  cfg.count_min = 15;
  cfg.count_max = 25;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const AnnotatedScene s = generate_scene(cfg, seed);
    CHECK_NOTHROW(s.validate());
    CHECK(s.width == 48);
    CHECK(s.height == 80);
    CHECK(s.image.width == 48);
    CHECK(s.image.height == 80);
    for (const Point& h : s.heads) {
      CHECK(h.x >= 0.0);
      CHECK(h.x < 48.0);
      CHECK(h.y >= 0.0);
      CHECK(h.y < 80.0);
    }
    for (double v : s.image.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("generate_scenes derives distinct per-scene streams") {
  SceneConfig cfg;
  cfg.count_min = 8;
  cfg.count_max = 16;
  const auto batch = generate_scenes(cfg, 3, 11, "s");
  REQUIRE(batch.size() == 3);
  CHECK(batch[0].id == "s0000");
  CHECK(batch[1].id == "s0001");
  const auto again = generate_scenes(cfg, 3, 11, "s");
  CHECK(batch[1].image.values == again[1].image.values);
  CHECK(batch[0].image.values != batch[1].image.values);
}

TEST_CASE("config validation") {
  SceneConfig cfg;
  cfg.width = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SceneConfig{};
  cfg.count_min = 10;
  cfg.count_max = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SceneConfig{};
  cfg.noise_level = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("config file round trip picks up scene keys") {
  const KeyValueConfig kv = KeyValueConfig::parse_string(
      "scene.width = 96\n"
      "scene.count_min = 7\n"
      "scene.count_max = 9\n"
      "scene.blob_scale = 1.5\n",
      "inline");
  const SceneConfig cfg = SceneConfig::from_config(kv);
  CHECK(cfg.width == 96);
  CHECK(cfg.count_min == 7);
  CHECK(cfg.count_max == 9);
  CHECK(cfg.blob_scale == 1.5);
  CHECK(cfg.height == SceneConfig{}.height);
}
