#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pacnn/errors.hpp"
#include "pacnn/io.hpp"
#include "pacnn/rng.hpp"
#include "pacnn/scene.hpp"
#include "pacnn/tensor.hpp"
#include "pacnn/value_map.hpp"

using namespace pacnn;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("pacnn_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

ValueMap random_map(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  ValueMap m(w, h);
  for (auto& v : m.values) v = rng.uniform(-2.0, 2.0);
  return m;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("map files round trip through f32") {
  TempDir tmp;
  const ValueMap m = random_map(13, 7, 1);
  const std::string path = tmp.file("m.pacm");
  write_map(path, m);

  const ValueMap back = read_map(path);
  REQUIRE(back.width == 13);
  REQUIRE(back.height == 7);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    // Storage is f32: the round trip equals an explicit downcast.
    CHECK(back.values[i] == static_cast<double>(static_cast<float>(m.values[i])));
  }

  // A second write of the loaded map is byte-identical: no drift.
  const std::string path2 = tmp.file("m2.pacm");
  write_map(path2, back);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("map header is the documented layout") {
  TempDir tmp;
  ValueMap m(2, 1);
  m.at(0, 0) = 1.0f;
  m.at(1, 0) = -2.5f;
  const std::string path = tmp.file("h.pacm");
  write_map(path, m);
  const std::string bytes = slurp(path);
  REQUIRE(bytes.size() == 4 + 1 + 4 + 4 + 2 * 4);
  CHECK(bytes.substr(0, 4) == "PACM");
  CHECK(bytes[4] == 1);  // version
  // u32 little-endian width 2, height 1.
  CHECK(static_cast<unsigned char>(bytes[5]) == 2);
  CHECK(static_cast<unsigned char>(bytes[9]) == 1);
  // f32  1.0 = 0x3f800000 little-endian.
  CHECK(static_cast<unsigned char>(bytes[13]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[16]) == 0x3f);
}

TEST_CASE("map reader rejects malformed files") {
  TempDir tmp;
  const std::string path = tmp.file("bad.pacm");
  std::ofstream(path, std::ios::binary) << "PACX";
  CHECK_THROWS_AS(read_map(path), IoError);
  CHECK_THROWS_AS(read_map(tmp.file("missing.pacm")), IoError);

  // Truncated payload.
  const ValueMap m = random_map(4, 4, 2);
  const std::string full = tmp.file("full.pacm");
  write_map(full, m);
  const std::string bytes = slurp(full);
  std::ofstream(path, std::ios::binary)
      << bytes.substr(0, bytes.size() - 5);
  CHECK_THROWS_AS(read_map(path), IoError);
}

TEST_CASE("checkpoints round trip parameters and flags") {
  TempDir tmp;
  ParamStore store;
  auto& a = store.add("trunk.b1.c1.w", 2, 3, 3);
  auto& b = store.add("norm.density_scale", 1, 1, 1, false);
  Rng rng(3);
  for (auto& v : a.t.v) v = rng.uniform(-1.0, 1.0);
  b.t.v[0] = 100.0;

  const std::string path = tmp.file("ck.pacp");
  write_checkpoint(path, store);
  const ParamStore back = read_checkpoint(path);

  REQUIRE(back.all().size() == 2);
  CHECK(back.all()[0].id == "trunk.b1.c1.w");
  CHECK(back.all()[0].learnable);
  CHECK(!back.all()[1].learnable);
  CHECK(back.all()[1].t.v[0] == 100.0);
  for (std::size_t i = 0; i < a.t.v.size(); ++i) {
    CHECK(back.all()[0].t.v[i] ==
          static_cast<double>(static_cast<float>(a.t.v[i])));
  }
  CHECK(back.all()[0].t.channels == 2);
  CHECK(back.all()[0].t.height == 3);
  CHECK(back.all()[0].t.width == 3);

  // Re-saving the loaded store reproduces the file byte for byte.
  const std::string path2 = tmp.file("ck2.pacp");
  write_checkpoint(path2, back);
  CHECK(slurp(path) == slurp(path2));

  CHECK(slurp(path).substr(0, 4) == "PACP");
}

TEST_CASE("quantize matches a save/load cycle") {
  TempDir tmp;
  ParamStore store;
  auto& p = store.add("w", 1, 2, 2);
  p.t.v = {0.1, 1.0 / 3.0, -7.77, 2.5};

  ParamStore quantized;
  quantized.add("w", 1, 2, 2).t.v = p.t.v;
  quantize_params_f32(quantized);

  const std::string path = tmp.file("q.pacp");
  write_checkpoint(path, store);
  const ParamStore loaded = read_checkpoint(path);
  CHECK(loaded.all()[0].t.v == quantized.all()[0].t.v);
  CHECK(quantized.all()[0].t.v[3] == 2.5);  // exactly representable
}

TEST_CASE("rle masks encode zero spans first") {
  ValueMap m(5, 3, 0.0);
  // First twelve cells on, last three off.
  for (int i = 0; i < 12; ++i) m.values[static_cast<std::size_t>(i)] = 1.0;
  CHECK(rle_encode_mask(m) == "0,12,3");

  const ValueMap back = rle_decode_mask("0,12,3", 5, 3);
  CHECK(back.values == m.values);

  ValueMap lead(4, 1, 0.0);
  lead.at(2, 0) = 1.0;
  lead.at(3, 0) = 1.0;
  CHECK(rle_encode_mask(lead) == "2,2");
  CHECK(rle_decode_mask("2,2", 4, 1).values == lead.values);

  const ValueMap zeros(3, 2, 0.0);
  CHECK(rle_decode_mask(rle_encode_mask(zeros), 3, 2).values == zeros.values);
  const ValueMap ones(3, 2, 1.0);
  CHECK(rle_decode_mask(rle_encode_mask(ones), 3, 2).values == ones.values);
}

TEST_CASE("rle round trips random masks") {
  Rng rng(9);
  ValueMap m(17, 11);
  for (auto& v : m.values) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  const ValueMap back = rle_decode_mask(rle_encode_mask(m), 17, 11);
  CHECK(back.values == m.values);
}

TEST_CASE("rle rejects inconsistent runs") {
  CHECK_THROWS_AS(rle_decode_mask("0,5", 2, 2), IoError);      // too short
  CHECK_THROWS_AS(rle_decode_mask("0,5,1", 2, 2), IoError);    // too long
  CHECK_THROWS_AS(rle_decode_mask("abc", 2, 2), IoError);
}

TEST_CASE("annotations round trip every field") {
  TempDir tmp;
  AnnotatedScene s;
  s.id = "scene_a";
  s.width = 24;
  s.height = 16;
  s.heads = {{1.25, 2.5}, {20.125, 15.0625}, {0.0078125, 3.0}};
  s.per_head_scale = {2.5, 1.25, 0.75};
  s.camera = CameraModel{600.0, 17.75, 1.75};
  s.roi = ValueMap(24, 16, 0.0);
  for (int x = 0; x < 24; ++x) s.roi->at(x, 2) = 1.0;

  AnnotatedScene bare;
  bare.id = "scene_b";
  bare.width = 8;
  bare.height = 8;

  const std::string path = tmp.file("ann.jsonl");
  write_annotations(path, {s, bare});
  const auto back = read_annotations(path);
  REQUIRE(back.size() == 2);

  const AnnotatedScene& r = back[0];
  CHECK(r.id == "scene_a");
  CHECK(r.width == 24);
  CHECK(r.height == 16);
  REQUIRE(r.heads.size() == 3);
  // Head coordinates are dyadic rationals: exact through JSON doubles.
  CHECK(r.heads[0].x == 1.25);
  CHECK(r.heads[1].y == 15.0625);
  CHECK(r.heads[2].x == 0.0078125);
  CHECK(r.per_head_scale == s.per_head_scale);
  REQUIRE(r.camera.has_value());
  CHECK(r.camera->focal_length == 600.0);
  CHECK(r.camera->camera_height == 17.75);
  CHECK(r.camera->person_height == 1.75);
  REQUIRE(r.roi.has_value());
  CHECK(r.roi->values == s.roi->values);
  CHECK(r.image.empty());  // images live in separate files

  CHECK(back[1].id == "scene_b");
  CHECK(!back[1].camera.has_value());
  CHECK(!back[1].roi.has_value());
  CHECK(back[1].heads.empty());
}

TEST_CASE("annotation reader rejects garbage") {
  TempDir tmp;
  const std::string path = tmp.file("bad.jsonl");
  std::ofstream(path) << "{\"id\": \"x\"\n";  // truncated JSON
  CHECK_THROWS_AS(read_annotations(path), IoError);
  CHECK_THROWS_AS(read_annotations(tmp.file("none.jsonl")), IoError);
}

TEST_CASE("fits and meta round trip") {
  TempDir tmp;
  SceneFit f1;
  f1.id = "s0";
  f1.fit.a = 3.5;
  f1.fit.b = 0.0625;
  f1.fit.c = -12.5;
  f1.fit.residual_rms = 0.25;
  f1.fit.n_rows_used = 9;
  f1.fit.converged = true;
  SceneFit f2;
  f2.id = "s1";
  f2.fit.converged = false;

  const std::string path = tmp.file("fits.jsonl");
  write_fits(path, {f1, f2});
  const auto back = read_fits(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "s0");
  CHECK(back[0].fit.a == 3.5);
  CHECK(back[0].fit.b == 0.0625);
  CHECK(back[0].fit.c == -12.5);
  CHECK(back[0].fit.residual_rms == 0.25);
  CHECK(back[0].fit.n_rows_used == 9);
  CHECK(back[0].fit.converged);
  CHECK(!back[1].fit.converged);

  GtMeta meta;
  meta.p_max = 6.25;
  meta.density_scale = 100.0;
  const std::string mpath = tmp.file("meta.json");
  write_gt_meta(mpath, meta);
  const GtMeta mback = read_gt_meta(mpath);
  CHECK(mback.p_max == 6.25);
  CHECK(mback.density_scale == 100.0);
}

TEST_CASE("pgm renders normalized bytes") {
  TempDir tmp;
  ValueMap m(2, 2);
  m.at(0, 0) = 0.0;
  m.at(1, 0) = 1.0;
  m.at(0, 1) = 2.0;
  m.at(1, 1) = 4.0;
  const std::string path = tmp.file("m.pgm");
  write_pgm(path, m);
  const std::string bytes = slurp(path);
  CHECK(bytes.substr(0, 2) == "P5");
  // Payload: min 0 -> 0, max 4 -> 255, linear in between.
  const std::string payload = bytes.substr(bytes.size() - 4);
  CHECK(static_cast<unsigned char>(payload[0]) == 0);
  CHECK(static_cast<unsigned char>(payload[1]) == 64);   // 1/4 of range
  CHECK(static_cast<unsigned char>(payload[2]) == 128);  // rounded 127.5
  CHECK(static_cast<unsigned char>(payload[3]) == 255);

  // Flat maps render black rather than dividing by zero.
  const ValueMap flat(2, 2, 3.0);
  const std::string fpath = tmp.file("flat.pgm");
  write_pgm(fpath, flat);
  const std::string fbytes = slurp(fpath);
  const std::string fpayload = fbytes.substr(fbytes.size() - 4);
  for (const char c : fpayload) CHECK(c == 0);
}

TEST_CASE("dataset directory round trips scenes with images") {
  TempDir tmp;
  SceneConfig cfg;
  cfg.width = 32;
  cfg.height = 32;
  cfg.count_min = 4;
  cfg.count_max = 6;
  const auto scenes = generate_scenes(cfg, 2, 99, "ds");

  const std::string dir = (tmp.path / "data").string();
  save_dataset(dir, scenes);
  CHECK(fs::exists(fs::path(dir) / "annotations.jsonl"));
  CHECK(fs::exists(fs::path(dir) / "images" / "ds0000.pacm"));

  const auto back = load_dataset(dir);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == scenes[i].id);
    CHECK(back[i].heads.size() == scenes[i].heads.size());
    REQUIRE(back[i].image.width == 32);
    // Images pass through the f32 container.
    for (std::size_t j = 0; j < back[i].image.values.size(); ++j) {
      CHECK(back[i].image.values[j] ==
            static_cast<double>(static_cast<float>(scenes[i].image.values[j])));
    }
  }

  CHECK_THROWS_AS(load_dataset((tmp.path / "nowhere").string()), IoError);
}
