#include "pacnn/value_map.hpp"

#include <algorithm>
#include <cstdint>

#include "pacnn/errors.hpp"

namespace pacnn {

double deterministic_sum(const double* x, std::size_t n) {
  constexpr std::size_t kBlock = 4096;
  const std::int64_t n_blocks =
      static_cast<std::int64_t>((n + kBlock - 1) / kBlock);
  if (n_blocks <= 1) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  std::vector<double> partial(static_cast<std::size_t>(n_blocks), 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < n_blocks; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(lo + kBlock, n);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += x[i];
    partial[static_cast<std::size_t>(b)] = s;
  }
  double s = 0.0;
  for (const double p : partial) s += p;
  return s;
}

double ValueMap::total() const {
  return deterministic_sum(values.data(), values.size());
}

double ValueMap::max_value() const {
  if (values.empty()) throw DomainError("max_value on empty map");
  return *std::max_element(values.begin(), values.end());
}

double ValueMap::min_value() const {
  if (values.empty()) throw DomainError("min_value on empty map");
  return *std::min_element(values.begin(), values.end());
}

ValueMap downsample(const ValueMap& in, int factor, DownsampleMode mode) {
  if (factor < 1) throw ConfigError("downsample factor must be >= 1");
  if (in.empty()) throw ShapeError("downsample on empty map");
  const int ow = (in.width + factor - 1) / factor;
  const int oh = (in.height + factor - 1) / factor;
  ValueMap out(ow, oh);
  const double denom =
      mode == DownsampleMode::kMean ? 1.0 / (static_cast<double>(factor) * factor)
                                    : 1.0;
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double s = 0.0;
      const int y1 = std::min((oy + 1) * factor, in.height);
      const int x1 = std::min((ox + 1) * factor, in.width);
      for (int y = oy * factor; y < y1; ++y) {
        for (int x = ox * factor; x < x1; ++x) s += in.at(x, y);
      }
      out.at(ox, oy) = s * denom;
    }
  }
  return out;
}

ValueMap downsample_mask_majority(const ValueMap& in, int factor) {
  if (factor < 1) throw ConfigError("downsample factor must be >= 1");
  if (in.empty()) throw ShapeError("downsample on empty map");
  const int ow = (in.width + factor - 1) / factor;
  const int oh = (in.height + factor - 1) / factor;
  ValueMap out(ow, oh);
  const int full = factor * factor;
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      int on = 0;
      const int y1 = std::min((oy + 1) * factor, in.height);
      const int x1 = std::min((ox + 1) * factor, in.width);
      for (int y = oy * factor; y < y1; ++y) {
        for (int x = ox * factor; x < x1; ++x) {
          if (in.at(x, y) != 0.0) ++on;
        }
      }
      out.at(ox, oy) = (2 * on >= full) ? 1.0 : 0.0;
    }
  }
  return out;
}

ValueMap pad_map(const ValueMap& in, int new_w, int new_h, PadMode mode) {
  if (in.empty()) throw ShapeError("pad_map on empty map");
  if (new_w < in.width || new_h < in.height) {
    throw ShapeError("pad_map target smaller than the input");
  }
  ValueMap out(new_w, new_h);
  for (int y = 0; y < new_h; ++y) {
    const int sy = std::min(y, in.height - 1);
    for (int x = 0; x < new_w; ++x) {
      const int sx = std::min(x, in.width - 1);
      if (mode == PadMode::kEdge || (y < in.height && x < in.width)) {
        out.at(x, y) = in.at(sx, sy);
      }
    }
  }
  return out;
}

}  // namespace pacnn
