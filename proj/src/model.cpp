#include "pacnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "pacnn/errors.hpp"
#include "pacnn/kernels.hpp"
#include "pacnn/rng.hpp"

namespace pacnn {

ModelConfig ModelConfig::from_config(const KeyValueConfig& cfg) {
  ModelConfig m;
  m.block_widths = cfg.get_int_list("model.widths", m.block_widths);
  m.block_depths = cfg.get_int_list("model.depths", m.block_depths);
  m.scale_branch_depth = cfg.get_int("model.scale_depth", m.scale_branch_depth);
  m.persp_branch_depth = cfg.get_int("model.persp_depth", m.persp_branch_depth);
  m.activation = cfg.get_string("model.activation", m.activation);
  m.pad_input = cfg.get_bool("model.pad_input", m.pad_input);
  m.validate();
  return m;
}

void ModelConfig::validate() const {
  if (block_widths.size() != 4 || block_depths.size() != 4) {
    throw ConfigError("model needs exactly 4 block widths and 4 block depths");
  }
  for (const int w : block_widths) {
    if (w < 1) throw ConfigError("block widths must be >= 1");
  }
  for (const int d : block_depths) {
    if (d < 1) throw ConfigError("block depths must be >= 1");
  }
  if (scale_branch_depth < 1 || persp_branch_depth < 1) {
    throw ConfigError("branch depths must be >= 1");
  }
  if (activation != "relu" && activation != "softplus") {
    throw ConfigError("activation must be 'relu' or 'softplus'");
  }
}

struct Model::Cache {
  bool valid = false;
  CombineMode mode = CombineMode::kAverage;
  int pad_x = 0, pad_y = 0;
  Tensor x;
  std::vector<std::vector<Tensor>> tz, ta;  // trunk pre/post activation
  Tensor pool_out[3];
  std::vector<int> pool_arg[3];
  Tensor p5;  // shared 1/16 pool of the trunk output
  std::vector<int> p5_arg;
  std::vector<Tensor> sz, sa;  // scale branch at 1/16
  Tensor p6;                   // 1/32 pool
  std::vector<int> p6_arg;
  Tensor s6z, s6a;
  std::vector<Tensor> qz, qa;  // perspective branch at 1/16
  Tensor d1z, d1, d2z, d2, d3z, d3, psz, ps;
  Tensor pe;  // upsampled perspective (1/8)
  Tensor u3;  // upsampled d3 (1/16)
  Tensor m, um;                 // average path
  Tensor ws, des, ues, wf, de;  // perspective path

  template <typename F>
  void for_each_tensor(F&& f) {
    f(x);
    for (auto& blk : tz) {
      for (auto& t : blk) f(t);
    }
    for (auto& blk : ta) {
      for (auto& t : blk) f(t);
    }
    for (auto& t : pool_out) f(t);
    f(p5);
    for (auto& t : sz) f(t);
    for (auto& t : sa) f(t);
    f(p6);
    f(s6z);
    f(s6a);
    for (auto& t : qz) f(t);
    for (auto& t : qa) f(t);
    f(d1z);
    f(d1);
    f(d2z);
    f(d2);
    f(d3z);
    f(d3);
    f(psz);
    f(ps);
    f(pe);
    f(u3);
    f(m);
    f(um);
    f(ws);
    f(des);
    f(ues);
    f(wf);
    f(de);
  }
};

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  char name[64];

  blocks_.resize(4);
  int ic = 1;
  for (int b = 0; b < 4; ++b) {
    const int oc = cfg_.block_widths[static_cast<std::size_t>(b)];
    for (int i = 0; i < cfg_.block_depths[static_cast<std::size_t>(b)]; ++i) {
      ConvSpec s;
      std::snprintf(name, sizeof(name), "trunk.b%d.c%d", b + 1, i + 1);
      s.wid = std::string(name) + ".w";
      s.bid = std::string(name) + ".b";
      s.ic = ic;
      s.oc = oc;
      s.k = 3;
      s.pad = 1;
      params_.add(s.wid, s.oc * s.ic, 3, 3);
      params_.add(s.bid, s.oc, 1, 1);
      blocks_[static_cast<std::size_t>(b)].push_back(s);
      ic = oc;
    }
  }
  const int w4 = cfg_.block_widths[3];

  auto branch_conv = [&](const char* base, int i, int cin, int cout) {
    ConvSpec s;
    std::snprintf(name, sizeof(name), "%s.c%d", base, i + 1);
    s.wid = std::string(name) + ".w";
    s.bid = std::string(name) + ".b";
    s.ic = cin;
    s.oc = cout;
    s.k = 3;
    s.pad = 1;
    params_.add(s.wid, s.oc * s.ic, 3, 3);
    params_.add(s.bid, s.oc, 1, 1);
    return s;
  };

  for (int i = 0; i < cfg_.scale_branch_depth; ++i) {
    scale_convs_.push_back(branch_conv("scale", i, w4, w4));
  }
  scale6_ = branch_conv("scale6", 0, w4, w4);
  for (int i = 0; i < cfg_.persp_branch_depth; ++i) {
    persp_convs_.push_back(branch_conv("persp", i, w4, w4));
  }

  auto head = [&](const char* base, int cin) {
    ConvSpec s;
    s.wid = std::string(base) + ".w";
    s.bid = std::string(base) + ".b";
    s.ic = cin;
    s.oc = 1;
    s.k = 1;
    s.pad = 0;
    params_.add(s.wid, s.ic, 1, 1);
    params_.add(s.bid, 1, 1, 1);
    return s;
  };
  head_d1_ = head("head.d1", w4);
  head_d2_ = head("head.d2", w4);
  head_d3_ = head("head.d3", w4);
  head_ps_ = head("head.ps", w4);

  // One learned upsampler per use-site.
  params_.add("up.d3.w", 1, 4, 4);
  params_.add("up.avg.w", 1, 4, 4);
  params_.add("up.pa.w", 1, 4, 4);
  params_.add("up.p.w", 1, 4, 4);

  params_.add("pa.inner.alpha", 1, 1, 1);
  params_.add("pa.inner.beta", 1, 1, 1);
  params_.add("pa.outer.alpha", 1, 1, 1);
  params_.add("pa.outer.beta", 1, 1, 1);
}

Model::~Model() = default;
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;

// Copies share nothing; the forward cache is not cloned, so a copy is a
// fresh inference-ready instance (one mutable cache per thread).
Model::Model(const Model& o)
    : cfg_(o.cfg_), params_(o.params_), blocks_(o.blocks_),
      scale_convs_(o.scale_convs_), scale6_(o.scale6_),
      persp_convs_(o.persp_convs_), head_d1_(o.head_d1_),
      head_d2_(o.head_d2_), head_d3_(o.head_d3_), head_ps_(o.head_ps_),
      cache_(nullptr) {}

Model& Model::operator=(const Model& o) {
  if (this != &o) {
    cfg_ = o.cfg_;
    params_ = o.params_;
    blocks_ = o.blocks_;
    scale_convs_ = o.scale_convs_;
    scale6_ = o.scale6_;
    persp_convs_ = o.persp_convs_;
    head_d1_ = o.head_d1_;
    head_d2_ = o.head_d2_;
    head_d3_ = o.head_d3_;
    head_ps_ = o.head_ps_;
    cache_.reset();
  }
  return *this;
}

void Model::init_params(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x90de1));

  auto kaiming = [&](const ConvSpec& s) {
    LayerParam& w = params_.at(s.wid);
    const double std = std::sqrt(2.0 / (static_cast<double>(s.ic) * s.k * s.k));
    for (double& v : w.t.v) v = std * rng.normal();
    LayerParam& b = params_.at(s.bid);
    for (double& v : b.t.v) v = 0.0;
  };

  for (const auto& blk : blocks_) {
    for (const auto& s : blk) kaiming(s);
  }
  for (const auto& s : scale_convs_) kaiming(s);
  kaiming(scale6_);
  for (const auto& s : persp_convs_) kaiming(s);
  kaiming(head_d1_);
  kaiming(head_d2_);
  kaiming(head_d3_);
  kaiming(head_ps_);

  // Separable bilinear stamp: partition of unity per output parity class.
  static const double kBilin[4] = {0.25, 0.75, 0.75, 0.25};
  for (const char* id : {"up.d3.w", "up.avg.w", "up.pa.w", "up.p.w"}) {
    LayerParam& w = params_.at(id);
    for (int ky = 0; ky < 4; ++ky) {
      for (int kx = 0; kx < 4; ++kx) {
        w.t.val(0, ky, kx) = kBilin[ky] * kBilin[kx];
      }
    }
  }

  params_.at("pa.inner.alpha").t.v[0] = 1.0;
  params_.at("pa.inner.beta").t.v[0] = 0.0;
  params_.at("pa.outer.alpha").t.v[0] = 1.0;
  params_.at("pa.outer.beta").t.v[0] = 0.0;
}

PAWeightParams Model::pa_inner() const {
  return {params_.at("pa.inner.alpha").t.v[0],
          params_.at("pa.inner.beta").t.v[0]};
}

PAWeightParams Model::pa_outer() const {
  return {params_.at("pa.outer.alpha").t.v[0],
          params_.at("pa.outer.beta").t.v[0]};
}

void Model::set_pa_inner(const PAWeightParams& p) {
  params_.at("pa.inner.alpha").t.v[0] = p.alpha;
  params_.at("pa.inner.beta").t.v[0] = p.beta;
}

void Model::set_pa_outer(const PAWeightParams& p) {
  params_.at("pa.outer.alpha").t.v[0] = p.alpha;
  params_.at("pa.outer.beta").t.v[0] = p.beta;
}

Tensor& Model::conv_act(const ConvSpec& spec, Tensor& in, Tensor& z, Tensor& a,
                        bool head) const {
  const LayerParam& w = params_.at(spec.wid);
  const LayerParam& b = params_.at(spec.bid);
  const int oh = conv_out_extent(in.height, spec.k, 1, spec.pad);
  const int ow = conv_out_extent(in.width, spec.k, 1, spec.pad);
  z = Tensor(spec.oc, oh, ow);
  conv2d_forward(in.v.data(), spec.ic, in.height, in.width, w.t.v.data(),
                 b.t.v.data(), spec.oc, spec.k, 1, spec.pad, z.v.data());
  a = Tensor(spec.oc, oh, ow);
  if (head || cfg_.activation == "softplus") {
    softplus_forward(z.v.data(), z.size(), a.v.data());
  } else {
    relu_forward(z.v.data(), z.size(), a.v.data());
  }
  return a;
}

void Model::conv_act_backward(const ConvSpec& spec, Tensor& in, Tensor& z,
                              Tensor& a, bool head) {
  if (head || cfg_.activation == "softplus") {
    softplus_backward(z.v.data(), a.g.data(), z.size(), z.g.data());
  } else {
    relu_backward(z.v.data(), a.g.data(), z.size(), z.g.data());
  }
  LayerParam& w = params_.at(spec.wid);
  LayerParam& b = params_.at(spec.bid);
  conv2d_backward_params(in.v.data(), spec.ic, in.height, in.width, spec.oc,
                         spec.k, 1, spec.pad, z.g.data(), w.t.g.data(),
                         b.t.g.data());
  conv2d_backward_input(w.t.v.data(), spec.ic, in.height, in.width, spec.oc,
                        spec.k, 1, spec.pad, z.g.data(), in.g.data());
}

namespace {

Tensor pool_apply(const Tensor& in, std::vector<int>& argmax) {
  Tensor out(in.channels, in.height / 2, in.width / 2);
  argmax.assign(out.size(), 0);
  maxpool2x2_forward(in.v.data(), in.channels, in.height, in.width,
                     out.v.data(), argmax.data());
  return out;
}

void pool_backward(const std::vector<int>& argmax, const Tensor& out,
                   Tensor& in) {
  maxpool2x2_backward(argmax.data(), out.g.data(), out.channels, out.height,
                      out.width, in.g.data());
}

void seed_grad(Tensor& t, const ValueMap& g, const char* what) {
  if (g.empty()) return;
  if (t.channels != 1 || t.height != g.height || t.width != g.width) {
    throw ShapeError(std::string("gradient size mismatch for ") + what);
  }
  for (std::size_t i = 0; i < t.g.size(); ++i) t.g[i] += g.values[i];
}

}  // namespace

MultiScaleOutputs Model::forward(const ValueMap& image, CombineMode mode) {
  if (image.empty()) throw ShapeError("empty input image");
  const int pad_x = (kDivisor - image.width % kDivisor) % kDivisor;
  const int pad_y = (kDivisor - image.height % kDivisor) % kDivisor;
  if ((pad_x != 0 || pad_y != 0) && !cfg_.pad_input) {
    throw ShapeError("input extent not divisible by 32 and padding disabled");
  }

  cache_ = std::make_unique<Cache>();
  Cache& c = *cache_;
  c.mode = mode;
  c.pad_x = pad_x;
  c.pad_y = pad_y;

  c.x = Tensor(1, image.height + pad_y, image.width + pad_x);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) c.x.val(0, y, x) = image.at(x, y);
  }

  // Trunk.
  c.tz.resize(4);
  c.ta.resize(4);
  Tensor* cur = &c.x;
  for (int b = 0; b < 4; ++b) {
    const auto& blk = blocks_[static_cast<std::size_t>(b)];
    c.tz[static_cast<std::size_t>(b)].resize(blk.size());
    c.ta[static_cast<std::size_t>(b)].resize(blk.size());
    for (std::size_t i = 0; i < blk.size(); ++i) {
      conv_act(blk[i], *cur, c.tz[static_cast<std::size_t>(b)][i],
               c.ta[static_cast<std::size_t>(b)][i], false);
      cur = &c.ta[static_cast<std::size_t>(b)][i];
    }
    if (b < 3) {
      c.pool_out[b] = pool_apply(*cur, c.pool_arg[b]);
      cur = &c.pool_out[b];
    }
  }
  Tensor& f4 = c.ta[3].back();  // 1/8

  // Density head at 1/8.
  conv_act(head_d1_, f4, c.d1z, c.d1, true);

  // Shared pool to 1/16 feeds both branches.
  c.p5 = pool_apply(f4, c.p5_arg);

  // Scale branch.
  c.sz.resize(scale_convs_.size());
  c.sa.resize(scale_convs_.size());
  cur = &c.p5;
  for (std::size_t i = 0; i < scale_convs_.size(); ++i) {
    conv_act(scale_convs_[i], *cur, c.sz[i], c.sa[i], false);
    cur = &c.sa[i];
  }
  Tensor& f5 = *cur;
  conv_act(head_d2_, f5, c.d2z, c.d2, true);

  c.p6 = pool_apply(f5, c.p6_arg);
  conv_act(scale6_, c.p6, c.s6z, c.s6a, false);
  conv_act(head_d3_, c.s6a, c.d3z, c.d3, true);

  // Perspective branch.
  c.qz.resize(persp_convs_.size());
  c.qa.resize(persp_convs_.size());
  cur = &c.p5;
  for (std::size_t i = 0; i < persp_convs_.size(); ++i) {
    conv_act(persp_convs_[i], *cur, c.qz[i], c.qa[i], false);
    cur = &c.qa[i];
  }
  conv_act(head_ps_, *cur, c.psz, c.ps, true);

  auto deconv_apply = [&](const char* wid, const Tensor& in) {
    const LayerParam& w = params_.at(wid);
    Tensor out(1, 2 * in.height, 2 * in.width);
    deconv2x_forward(in.v.data(), 1, in.height, in.width, w.t.v.data(), 1,
                     out.v.data());
    return out;
  };

  c.pe = deconv_apply("up.p.w", c.ps);
  c.u3 = deconv_apply("up.d3.w", c.d3);

  const std::size_t n16 = c.d2.size();
  const std::size_t n8 = c.d1.size();

  if (mode == CombineMode::kAverage) {
    c.m = Tensor(1, c.d2.height, c.d2.width);
    for (std::size_t i = 0; i < n16; ++i) {
      c.m.v[i] = 0.5 * (c.d2.v[i] + c.u3.v[i]);
    }
    c.um = deconv_apply("up.avg.w", c.m);
    c.de = Tensor(1, c.d1.height, c.d1.width);
    for (std::size_t i = 0; i < n8; ++i) {
      c.de.v[i] = 0.5 * (c.d1.v[i] + c.um.v[i]);
    }
    c.ws = Tensor(1, c.d2.height, c.d2.width);
    fill(c.ws.v.data(), n16, 0.5);
    c.wf = Tensor(1, c.d1.height, c.d1.width);
    fill(c.wf.v.data(), n8, 0.5);
    c.des = c.m;
  } else {
    const PAWeightParams inner = pa_inner();
    const PAWeightParams outer = pa_outer();
    c.ws = Tensor(1, c.d2.height, c.d2.width);
    pa_weight_forward(c.ps.v.data(), n16, inner.alpha, inner.beta,
                      c.ws.v.data());
    c.des = Tensor(1, c.d2.height, c.d2.width);
    pa_mix_forward(c.d2.v.data(), c.u3.v.data(), c.ws.v.data(), n16,
                   c.des.v.data());
    c.ues = deconv_apply("up.pa.w", c.des);
    c.wf = Tensor(1, c.d1.height, c.d1.width);
    pa_weight_forward(c.pe.v.data(), n8, outer.alpha, outer.beta,
                      c.wf.v.data());
    c.de = Tensor(1, c.d1.height, c.d1.width);
    pa_mix_forward(c.d1.v.data(), c.ues.v.data(), c.wf.v.data(), n8,
                   c.de.v.data());
  }

  c.valid = true;

  MultiScaleOutputs out;
  out.d_e1 = map_from_tensor(c.d1);
  out.d_e2 = map_from_tensor(c.d2);
  out.d_e3 = map_from_tensor(c.d3);
  out.p_es = map_from_tensor(c.ps);
  out.p_e = map_from_tensor(c.pe);
  out.w_s = map_from_tensor(c.ws);
  out.w = map_from_tensor(c.wf);
  out.d_es = map_from_tensor(c.des);
  out.d_e = map_from_tensor(c.de);
  out.pad_x = pad_x;
  out.pad_y = pad_y;
  return out;
}

namespace {

// Minimum over all 2x2 windows of (largest value - second largest).
double pool_margin_of(const Tensor& in) {
  double margin = std::numeric_limits<double>::infinity();
  for (int ch = 0; ch < in.channels; ++ch) {
    for (int y = 0; y + 1 < in.height; y += 2) {
      for (int x = 0; x + 1 < in.width; x += 2) {
        const double v[4] = {in.val(ch, y, x), in.val(ch, y, x + 1),
                             in.val(ch, y + 1, x), in.val(ch, y + 1, x + 1)};
        double best = v[0], second = -std::numeric_limits<double>::infinity();
        for (int i = 1; i < 4; ++i) {
          if (v[i] > best) {
            second = best;
            best = v[i];
          } else if (v[i] > second) {
            second = v[i];
          }
        }
        margin = std::min(margin, best - second);
      }
    }
  }
  return margin;
}

}  // namespace

double Model::min_pool_margin() const {
  if (!cache_ || !cache_->valid) {
    throw StateError("min_pool_margin requires a cached forward pass");
  }
  const Cache& c = *cache_;
  double m = pool_margin_of(c.ta[0].back());
  m = std::min(m, pool_margin_of(c.ta[1].back()));
  m = std::min(m, pool_margin_of(c.ta[2].back()));
  m = std::min(m, pool_margin_of(c.ta[3].back()));
  m = std::min(m, pool_margin_of(c.sa.empty() ? c.p5 : c.sa.back()));
  return m;
}

void Model::backward(const OutputGrads& grads) {
  if (!cache_ || !cache_->valid) {
    throw StateError("backward requires a cached forward pass");
  }
  Cache& c = *cache_;
  c.for_each_tensor([](Tensor& t) { t.zero_grad(); });

  seed_grad(c.de, grads.d_e, "d_e");
  seed_grad(c.pe, grads.p_e, "p_e");
  seed_grad(c.ps, grads.p_es, "p_es");
  seed_grad(c.d1, grads.d_e1, "d_e1");
  seed_grad(c.d2, grads.d_e2, "d_e2");
  seed_grad(c.d3, grads.d_e3, "d_e3");

  auto deconv_backward = [&](const char* wid, Tensor& in, Tensor& out) {
    LayerParam& w = params_.at(wid);
    deconv2x_backward_input(w.t.v.data(), 1, in.height, in.width, 1,
                            out.g.data(), in.g.data());
    deconv2x_backward_weights(in.v.data(), 1, in.height, in.width, 1,
                              out.g.data(), w.t.g.data());
  };

  const std::size_t n16 = c.d2.size();
  const std::size_t n8 = c.d1.size();

  if (c.mode == CombineMode::kAverage) {
    add_scaled(c.d1.g.data(), c.de.g.data(), 0.5, n8);
    add_scaled(c.um.g.data(), c.de.g.data(), 0.5, n8);
    deconv_backward("up.avg.w", c.m, c.um);
    add_scaled(c.d2.g.data(), c.m.g.data(), 0.5, n16);
    add_scaled(c.u3.g.data(), c.m.g.data(), 0.5, n16);
  } else {
    const PAWeightParams outer = pa_outer();
    const PAWeightParams inner = pa_inner();
    const PaScalarGrads go =
        pa_backward(c.d1.v.data(), c.ues.v.data(), c.pe.v.data(),
                    c.wf.v.data(), c.de.g.data(), n8, outer.alpha, outer.beta,
                    c.d1.g.data(), c.ues.g.data(), c.pe.g.data());
    params_.at("pa.outer.alpha").t.g[0] += go.alpha;
    params_.at("pa.outer.beta").t.g[0] += go.beta;
    deconv_backward("up.pa.w", c.des, c.ues);
    const PaScalarGrads gi =
        pa_backward(c.d2.v.data(), c.u3.v.data(), c.ps.v.data(),
                    c.ws.v.data(), c.des.g.data(), n16, inner.alpha,
                    inner.beta, c.d2.g.data(), c.u3.g.data(), c.ps.g.data());
    params_.at("pa.inner.alpha").t.g[0] += gi.alpha;
    params_.at("pa.inner.beta").t.g[0] += gi.beta;
  }

  deconv_backward("up.d3.w", c.d3, c.u3);
  deconv_backward("up.p.w", c.ps, c.pe);

  // Heads and branches, reverse order of the forward pass.
  Tensor& f4 = c.ta[3].back();

  conv_act_backward(head_ps_, persp_convs_.empty() ? c.p5 : c.qa.back(),
                    c.psz, c.ps, true);
  for (int i = static_cast<int>(persp_convs_.size()) - 1; i >= 0; --i) {
    Tensor& in = i == 0 ? c.p5 : c.qa[static_cast<std::size_t>(i) - 1];
    conv_act_backward(persp_convs_[static_cast<std::size_t>(i)], in,
                      c.qz[static_cast<std::size_t>(i)],
                      c.qa[static_cast<std::size_t>(i)], false);
  }

  conv_act_backward(head_d3_, c.s6a, c.d3z, c.d3, true);
  conv_act_backward(scale6_, c.p6, c.s6z, c.s6a, false);
  Tensor& f5 = scale_convs_.empty() ? c.p5 : c.sa.back();
  pool_backward(c.p6_arg, c.p6, f5);

  conv_act_backward(head_d2_, f5, c.d2z, c.d2, true);
  for (int i = static_cast<int>(scale_convs_.size()) - 1; i >= 0; --i) {
    Tensor& in = i == 0 ? c.p5 : c.sa[static_cast<std::size_t>(i) - 1];
    conv_act_backward(scale_convs_[static_cast<std::size_t>(i)], in,
                      c.sz[static_cast<std::size_t>(i)],
                      c.sa[static_cast<std::size_t>(i)], false);
  }

  pool_backward(c.p5_arg, c.p5, f4);
  conv_act_backward(head_d1_, f4, c.d1z, c.d1, true);

  for (int b = 3; b >= 0; --b) {
    const auto& blk = blocks_[static_cast<std::size_t>(b)];
    for (int i = static_cast<int>(blk.size()) - 1; i >= 0; --i) {
      Tensor& in =
          i > 0 ? c.ta[static_cast<std::size_t>(b)][static_cast<std::size_t>(i) - 1]
          : (b > 0 ? c.pool_out[b - 1] : c.x);
      conv_act_backward(blk[static_cast<std::size_t>(i)], in,
                        c.tz[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)],
                        c.ta[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)],
                        false);
    }
    if (b > 0) {
      pool_backward(c.pool_arg[b - 1], c.pool_out[b - 1],
                    c.ta[static_cast<std::size_t>(b) - 1].back());
    }
  }
}

ValueMap combine_average(const ValueMap& d_e1, const ValueMap& d_e2,
                         const ValueMap& d_e3, const Upsampler& up) {
  const ValueMap u3 = up(d_e3);
  if (!u3.same_shape(d_e2)) {
    throw ShapeError("upsampled d_e3 does not match d_e2");
  }
  ValueMap mid(d_e2.width, d_e2.height);
  for (std::size_t i = 0; i < mid.size(); ++i) {
    mid.values[i] = 0.5 * (d_e2.values[i] + u3.values[i]);
  }
  const ValueMap um = up(mid);
  if (!um.same_shape(d_e1)) {
    throw ShapeError("upsampled mid map does not match d_e1");
  }
  ValueMap out(d_e1.width, d_e1.height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values[i] = 0.5 * (d_e1.values[i] + um.values[i]);
  }
  return out;
}

PaCombineState pa_combine_forward(const ValueMap& d_fine,
                                  const ValueMap& d_coarse_up,
                                  const ValueMap& p,
                                  const PAWeightParams& pw) {
  if (!d_fine.same_shape(d_coarse_up) || !d_fine.same_shape(p)) {
    throw ShapeError("pa_combine maps must share one size");
  }
  PaCombineState st;
  st.d_fine = d_fine;
  st.d_coarse = d_coarse_up;
  st.p = p;
  st.pw = pw;
  st.w = ValueMap(p.width, p.height);
  pa_weight_forward(p.values.data(), p.size(), pw.alpha, pw.beta,
                    st.w.values.data());
  st.d_out = ValueMap(p.width, p.height);
  pa_mix_forward(d_fine.values.data(), d_coarse_up.values.data(),
                 st.w.values.data(), p.size(), st.d_out.values.data());
  st.valid = true;
  return st;
}

PaCombineGrads pa_combine_backward(const ValueMap& upstream,
                                   const PaCombineState& state) {
  if (!state.valid) throw StateError("pa_combine_backward without forward");
  if (!upstream.same_shape(state.d_out)) {
    throw ShapeError("upstream gradient size mismatch");
  }
  PaCombineGrads g;
  g.d_fine = ValueMap(upstream.width, upstream.height);
  g.d_coarse = ValueMap(upstream.width, upstream.height);
  g.p = ValueMap(upstream.width, upstream.height);
  const PaScalarGrads s = pa_backward(
      state.d_fine.values.data(), state.d_coarse.values.data(),
      state.p.values.data(), state.w.values.data(), upstream.values.data(),
      upstream.size(), state.pw.alpha, state.pw.beta, g.d_fine.values.data(),
      g.d_coarse.values.data(), g.p.values.data());
  g.alpha = s.alpha;
  g.beta = s.beta;
  return g;
}

}  // namespace pacnn
