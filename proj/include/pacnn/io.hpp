#pragma once

#include <string>
#include <vector>

#include "pacnn/scene.hpp"
#include "pacnn/tanh_fit.hpp"
#include "pacnn/tensor.hpp"
#include "pacnn/value_map.hpp"

namespace pacnn {

// Map container: magic "PACM", version byte 1, u32 width, u32 height,
// then width*height row-major little-endian 32-bit floats.
void write_map(const std::string& path, const ValueMap& map);
ValueMap read_map(const std::string& path);

// 8-bit binary PGM with per-map normalization (min -> 0, max -> 255; a
// flat map renders black). Lossy by design, for eyeballing only.
void write_pgm(const std::string& path, const ValueMap& map);

// Parameter container: magic "PACP", version byte 1, u32 record count,
// then per record: u32 id length, id bytes, u32 channels, u32 height,
// u32 width, u8 learnable, then little-endian 32-bit floats. Values are
// quantized to f32 on write; loading reproduces the file bit-exactly.
void write_checkpoint(const std::string& path, const ParamStore& params);
ParamStore read_checkpoint(const std::string& path);

// In-place f32 round trip of all values, so in-memory parameters equal
// what a save/load cycle would produce.
void quantize_params_f32(ParamStore& params);

// Binary masks serialize as comma-separated run lengths of alternating
// 0/1 spans in row-major order, always starting with the zero span (so
// "0,12,3" means twelve ones followed by three zeros).
std::string rle_encode_mask(const ValueMap& mask);
ValueMap rle_decode_mask(const std::string& text, int width, int height);

// One scene per line: {"id","width","height","heads":[[x,y],...]} plus
// optional "roi" (run-length string), "camera" ({"f","H","C"... named
// focal_length, camera_height, person_height}) and "head_scale". Images
// live in separate map files, not in the annotation record.
void write_annotations(const std::string& path,
                       const std::vector<AnnotatedScene>& scenes);
std::vector<AnnotatedScene> read_annotations(const std::string& path);

// Dataset directory layout:
//   <dir>/annotations.jsonl
//   <dir>/images/<id>.pacm
//   <dir>/gt/density/<id>.pacm
//   <dir>/gt/perspective/<id>.pacm
//   <dir>/gt/fits.jsonl        per-scene perspective fit parameters
//   <dir>/gt/meta.json         {"p_max": ..., "density_scale": ...}
void save_dataset(const std::string& dir,
                  const std::vector<AnnotatedScene>& scenes);
std::vector<AnnotatedScene> load_dataset(const std::string& dir);

struct SceneFit {
  std::string id;
  TanhFitParams fit;
};

void write_fits(const std::string& path, const std::vector<SceneFit>& fits);
std::vector<SceneFit> read_fits(const std::string& path);

struct GtMeta {
  double p_max = 1.0;
  double density_scale = 100.0;
};

void write_gt_meta(const std::string& path, const GtMeta& meta);
GtMeta read_gt_meta(const std::string& path);

}  // namespace pacnn
