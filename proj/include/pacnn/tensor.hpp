#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pacnn/errors.hpp"
#include "pacnn/value_map.hpp"

namespace pacnn {

// (channels, height, width), row-major within a channel. Gradient storage
// parallels the values; zero_grad() before each backward pass since all
// backward kernels accumulate.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> v;
  std::vector<double> g;

  Tensor() = default;
  Tensor(int c, int h, int w)
      : channels(c), height(h), width(w),
        v(static_cast<std::size_t>(c) * h * w, 0.0),
        g(static_cast<std::size_t>(c) * h * w, 0.0) {}

  std::size_t size() const { return v.size(); }

  double& val(int c, int y, int x) {
    return v[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double val(int c, int y, int x) const {
    return v[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double& grad(int c, int y, int x) {
    return g[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

inline Tensor tensor_from_map(const ValueMap& m) {
  Tensor t(1, m.height, m.width);
  t.v = m.values;
  return t;
}

inline ValueMap map_from_tensor(const Tensor& t, int channel = 0) {
  if (channel < 0 || channel >= t.channels) {
    throw ShapeError("channel out of range");
  }
  ValueMap m(t.width, t.height);
  const std::size_t off = static_cast<std::size_t>(channel) * t.height * t.width;
  std::copy(t.v.begin() + static_cast<std::ptrdiff_t>(off),
            t.v.begin() + static_cast<std::ptrdiff_t>(off + m.size()),
            m.values.begin());
  return m;
}

// Named parameter tensor. Non-learnable entries carry run metadata (for
// example normalization scales) through checkpoints untouched by the
// optimizer.
struct LayerParam {
  std::string id;
  Tensor t;
  bool learnable = true;
};

class ParamStore {
 public:
  LayerParam& add(const std::string& id, int c, int h, int w,
                  bool learnable = true) {
    if (find(id) != nullptr) throw StateError("duplicate parameter id: " + id);
    params_.push_back({id, Tensor(c, h, w), learnable});
    return params_.back();
  }

  LayerParam* find(const std::string& id) {
    for (auto& p : params_) {
      if (p.id == id) return &p;
    }
    return nullptr;
  }
  const LayerParam* find(const std::string& id) const {
    for (const auto& p : params_) {
      if (p.id == id) return &p;
    }
    return nullptr;
  }

  LayerParam& at(const std::string& id) {
    LayerParam* p = find(id);
    if (p == nullptr) throw StateError("unknown parameter id: " + id);
    return *p;
  }
  const LayerParam& at(const std::string& id) const {
    const LayerParam* p = find(id);
    if (p == nullptr) throw StateError("unknown parameter id: " + id);
    return *p;
  }

  std::vector<LayerParam>& all() { return params_; }
  const std::vector<LayerParam>& all() const { return params_; }

  std::size_t learnable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (p.learnable) n += p.t.size();
    }
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) p.t.zero_grad();
  }

 private:
  std::vector<LayerParam> params_;
};

}  // namespace pacnn
