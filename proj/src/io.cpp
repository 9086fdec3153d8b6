#include "pacnn/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pacnn/errors.hpp"

namespace pacnn {

namespace {

using nlohmann::json;

// All integers and floats in the binary containers are little-endian.
// Serialize through explicit byte shuffles so the files are portable even
// from a big-endian host.
void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

float get_f32(std::istream& is) {
  const std::uint32_t u = get_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

std::ofstream open_out(const std::string& path, bool binary) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw IoError("cannot open for reading: " + path);
  return is;
}

void expect_magic(std::istream& is, const char* magic,
                  const std::string& path) {
  char buf[4];
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0) {
    throw IoError("bad magic in " + path + " (expected " + magic + ")");
  }
  char version;
  is.read(&version, 1);
  if (!is || version != 1) {
    throw IoError("unsupported container version in " + path);
  }
}

}  // namespace

void write_map(const std::string& path, const ValueMap& map) {
  if (map.empty()) throw ShapeError("refusing to write an empty map");
  std::ofstream os = open_out(path, true);
  os.write("PACM", 4);
  const char version = 1;
  os.write(&version, 1);
  put_u32(os, static_cast<std::uint32_t>(map.width));
  put_u32(os, static_cast<std::uint32_t>(map.height));
  for (const double v : map.values) put_f32(os, static_cast<float>(v));
  if (!os) throw IoError("write failed: " + path);
}

ValueMap read_map(const std::string& path) {
  std::ifstream is = open_in(path, true);
  expect_magic(is, "PACM", path);
  const std::uint32_t w = get_u32(is);
  const std::uint32_t h = get_u32(is);
  if (!is || w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20)) {
    throw IoError("bad map header in " + path);
  }
  ValueMap m(static_cast<int>(w), static_cast<int>(h));
  for (double& v : m.values) v = get_f32(is);
  if (!is) throw IoError("truncated map file: " + path);
  return m;
}

void write_pgm(const std::string& path, const ValueMap& map) {
  if (map.empty()) throw ShapeError("refusing to write an empty map");
  const double lo = map.min_value();
  const double hi = map.max_value();
  const double span = hi - lo;
  std::ofstream os = open_out(path, true);
  os << "P5\n" << map.width << " " << map.height << "\n255\n";
  for (const double v : map.values) {
    int g = span > 0.0 ? static_cast<int>(std::lround((v - lo) / span * 255.0))
                       : 0;
    g = std::clamp(g, 0, 255);
    os.put(static_cast<char>(static_cast<unsigned char>(g)));
  }
  if (!os) throw IoError("write failed: " + path);
}

void write_checkpoint(const std::string& path, const ParamStore& params) {
  std::ofstream os = open_out(path, true);
  os.write("PACP", 4);
  const char version = 1;
  os.write(&version, 1);
  put_u32(os, static_cast<std::uint32_t>(params.all().size()));
  for (const LayerParam& p : params.all()) {
    put_u32(os, static_cast<std::uint32_t>(p.id.size()));
    os.write(p.id.data(), static_cast<std::streamsize>(p.id.size()));
    put_u32(os, static_cast<std::uint32_t>(p.t.channels));
    put_u32(os, static_cast<std::uint32_t>(p.t.height));
    put_u32(os, static_cast<std::uint32_t>(p.t.width));
    os.put(p.learnable ? 1 : 0);
    for (const double v : p.t.v) put_f32(os, static_cast<float>(v));
  }
  if (!os) throw IoError("write failed: " + path);
}

ParamStore read_checkpoint(const std::string& path) {
  std::ifstream is = open_in(path, true);
  expect_magic(is, "PACP", path);
  const std::uint32_t count = get_u32(is);
  if (!is || count > 100000) throw IoError("bad record count in " + path);
  ParamStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t id_len = get_u32(is);
    if (!is || id_len == 0 || id_len > 4096) {
      throw IoError("bad parameter id in " + path);
    }
    std::string id(id_len, '\0');
    is.read(id.data(), id_len);
    const std::uint32_t c = get_u32(is);
    const std::uint32_t h = get_u32(is);
    const std::uint32_t w = get_u32(is);
    const int learnable = is.get();
    if (!is || c == 0 || h == 0 || w == 0 ||
        static_cast<std::uint64_t>(c) * h * w > (1ull << 28)) {
      throw IoError("bad parameter record in " + path);
    }
    LayerParam& p = store.add(id, static_cast<int>(c), static_cast<int>(h),
                              static_cast<int>(w), learnable != 0);
    for (double& v : p.t.v) v = get_f32(is);
    if (!is) throw IoError("truncated checkpoint: " + path);
  }
  return store;
}

void quantize_params_f32(ParamStore& params) {
  for (LayerParam& p : params.all()) {
    for (double& v : p.t.v) v = static_cast<double>(static_cast<float>(v));
  }
}

std::string rle_encode_mask(const ValueMap& mask) {
  if (mask.empty()) throw ShapeError("empty mask");
  std::string out;
  int current = 0;
  std::size_t run = 0;
  for (const double v : mask.values) {
    const int bit = v != 0.0 ? 1 : 0;
    if (bit == current) {
      ++run;
    } else {
      out += std::to_string(run) + ",";
      current = bit;
      run = 1;
    }
  }
  out += std::to_string(run);
  return out;
}

ValueMap rle_decode_mask(const std::string& text, int width, int height) {
  if (width < 1 || height < 1) throw ShapeError("bad mask dimensions");
  ValueMap mask(width, height);
  std::size_t pos = 0;
  int bit = 0;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    unsigned long run = 0;
    try {
      run = std::stoul(tok, &used);
    } catch (const std::exception&) {
      throw IoError("bad run length '" + tok + "' in mask");
    }
    if (used != tok.size()) throw IoError("bad run length '" + tok + "' in mask");
    if (pos + run > mask.size()) throw IoError("mask runs exceed dimensions");
    for (unsigned long k = 0; k < run; ++k) mask.values[pos++] = bit;
    bit = 1 - bit;
  }
  if (pos != mask.size()) throw IoError("mask runs do not cover dimensions");
  return mask;
}

namespace {

json scene_to_json(const AnnotatedScene& s) {
  json j;
  j["id"] = s.id;
  j["width"] = s.width;
  j["height"] = s.height;
  json heads = json::array();
  for (const Point& p : s.heads) heads.push_back({p.x, p.y});
  j["heads"] = std::move(heads);
  if (s.roi.has_value()) j["roi"] = rle_encode_mask(*s.roi);
  if (s.camera.has_value()) {
    j["camera"] = {{"focal_length", s.camera->focal_length},
                   {"camera_height", s.camera->camera_height},
                   {"person_height", s.camera->person_height}};
  }
  if (!s.per_head_scale.empty()) j["head_scale"] = s.per_head_scale;
  return j;
}

AnnotatedScene scene_from_json(const json& j) {
  AnnotatedScene s;
  s.id = j.at("id").get<std::string>();
  s.width = j.at("width").get<int>();
  s.height = j.at("height").get<int>();
  for (const auto& h : j.at("heads")) {
    if (!h.is_array() || h.size() != 2) {
      throw IoError("head entries must be [x, y] pairs");
    }
    s.heads.push_back({h[0].get<double>(), h[1].get<double>()});
  }
  if (j.contains("roi")) {
    s.roi = rle_decode_mask(j.at("roi").get<std::string>(), s.width, s.height);
  }
  if (j.contains("camera")) {
    const auto& c = j.at("camera");
    CameraModel cam;
    cam.focal_length = c.at("focal_length").get<double>();
    cam.camera_height = c.at("camera_height").get<double>();
    cam.person_height = c.at("person_height").get<double>();
    s.camera = cam;
  }
  if (j.contains("head_scale")) {
    s.per_head_scale = j.at("head_scale").get<std::vector<double>>();
  }
  return s;
}

}  // namespace

void write_annotations(const std::string& path,
                       const std::vector<AnnotatedScene>& scenes) {
  std::ofstream os = open_out(path, false);
  for (const AnnotatedScene& s : scenes) {
    os << scene_to_json(s).dump() << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

std::vector<AnnotatedScene> read_annotations(const std::string& path) {
  std::ifstream is = open_in(path, false);
  std::vector<AnnotatedScene> scenes;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      scenes.push_back(scene_from_json(j));
    } catch (const json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return scenes;
}

void save_dataset(const std::string& dir,
                  const std::vector<AnnotatedScene>& scenes) {
  write_annotations(dir + "/annotations.jsonl", scenes);
  for (const AnnotatedScene& s : scenes) {
    if (s.image.empty()) {
      throw ShapeError("scene " + s.id + " has no image to save");
    }
    write_map(dir + "/images/" + s.id + ".pacm", s.image);
  }
}

std::vector<AnnotatedScene> load_dataset(const std::string& dir) {
  std::vector<AnnotatedScene> scenes =
      read_annotations(dir + "/annotations.jsonl");
  for (AnnotatedScene& s : scenes) {
    s.image = read_map(dir + "/images/" + s.id + ".pacm");
    if (s.image.width != s.width || s.image.height != s.height) {
      throw IoError("image size disagrees with annotation for scene " + s.id);
    }
    s.validate();
  }
  return scenes;
}

void write_fits(const std::string& path, const std::vector<SceneFit>& fits) {
  std::ofstream os = open_out(path, false);
  for (const SceneFit& f : fits) {
    json j{{"id", f.id},
           {"a", f.fit.a},
           {"b", f.fit.b},
           {"c", f.fit.c},
           {"residual_rms", f.fit.residual_rms},
           {"n_rows_used", f.fit.n_rows_used},
           {"converged", f.fit.converged}};
    os << j.dump() << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

std::vector<SceneFit> read_fits(const std::string& path) {
  std::ifstream is = open_in(path, false);
  std::vector<SceneFit> fits;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      SceneFit f;
      f.id = j.at("id").get<std::string>();
      f.fit.a = j.at("a").get<double>();
      f.fit.b = j.at("b").get<double>();
      f.fit.c = j.at("c").get<double>();
      f.fit.residual_rms = j.at("residual_rms").get<double>();
      f.fit.n_rows_used = j.at("n_rows_used").get<int>();
      f.fit.converged = j.at("converged").get<bool>();
      fits.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return fits;
}

void write_gt_meta(const std::string& path, const GtMeta& meta) {
  std::ofstream os = open_out(path, false);
  const json j{{"p_max", meta.p_max}, {"density_scale", meta.density_scale}};
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path);
}

GtMeta read_gt_meta(const std::string& path) {
  std::ifstream is = open_in(path, false);
  try {
    const json j = json::parse(is);
    GtMeta m;
    m.p_max = j.at("p_max").get<double>();
    m.density_scale = j.at("density_scale").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace pacnn
