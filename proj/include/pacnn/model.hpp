#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pacnn/config.hpp"
#include "pacnn/tensor.hpp"
#include "pacnn/value_map.hpp"

namespace pacnn {

enum class CombineMode { kAverage, kPerspective };

struct PAWeightParams {
  double alpha = 1.0;
  double beta = 0.0;
};

// Four conv blocks with 2x2 pools after the first three, so the trunk
// output sits at 1/8 resolution. A shared pool takes it to 1/16, where a
// scale branch (conv stack + one further pooled conv stage at 1/32) emits
// the two coarse density heads and a perspective branch emits the scale
// estimate. All heads are 1x1 convs rectified with softplus; upsampling is
// learned 2x deconvolution, separate weights per use-site.
struct ModelConfig {
  std::vector<int> block_widths{16, 32, 64, 64};
  std::vector<int> block_depths{2, 2, 3, 3};
  int scale_branch_depth = 3;
  int persp_branch_depth = 3;
  // Hidden activation. Softplus keeps the network C1-smooth, which the
  // finite-difference harness needs; relu is the conventional default.
  std::string activation = "relu";
  bool pad_input = true;  // zero-pad images to a multiple of 32

  static ModelConfig from_config(const KeyValueConfig& cfg);
  void validate() const;
};

struct MultiScaleOutputs {
  ValueMap d_e1;  // density at 1/8
  ValueMap d_e2;  // density at 1/16
  ValueMap d_e3;  // density at 1/32
  ValueMap p_es;  // perspective at 1/16
  ValueMap p_e;   // perspective at 1/8
  ValueMap w_s;   // inner combination weights (1/16)
  ValueMap w;     // outer combination weights (1/8)
  ValueMap d_es;  // combined density at 1/16
  ValueMap d_e;   // final density at 1/8
  int pad_x = 0;  // zero padding applied to the right / bottom edge
  int pad_y = 0;
};

// Upstream loss gradients per output map; empty maps contribute nothing.
struct OutputGrads {
  ValueMap d_e, p_e, p_es, d_e1, d_e2, d_e3;
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  // Seeded Kaiming fan-in init for convs, bilinear kernels for deconvs.
  void init_params(std::uint64_t seed);

  MultiScaleOutputs forward(const ValueMap& image, CombineMode mode);
  // Accumulates into parameter gradients; requires a cached forward pass.
  void backward(const OutputGrads& grads);

  // Smallest max-vs-runner-up gap over every pooling window of the cached
  // forward pass. The pools are the network's only non-smooth points, so a
  // comfortable margin here certifies the loss is locally smooth in the
  // parameters, which finite-difference probing depends on.
  double min_pool_margin() const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }

  PAWeightParams pa_inner() const;
  PAWeightParams pa_outer() const;
  void set_pa_inner(const PAWeightParams& p);
  void set_pa_outer(const PAWeightParams& p);

  std::size_t learnable_param_count() const {
    return params_.learnable_count();
  }

  // The input extent divisor implied by the pooling structure.
  static constexpr int kDivisor = 32;

 private:
  struct ConvSpec {
    std::string wid, bid;
    int ic = 0, oc = 0, k = 3, pad = 1;
  };

  struct Cache;

  Tensor& conv_act(const ConvSpec& spec, Tensor& in, Tensor& z, Tensor& a,
                   bool head) const;
  void conv_act_backward(const ConvSpec& spec, Tensor& in, Tensor& z,
                         Tensor& a, bool head);

  ModelConfig cfg_;
  ParamStore params_;
  std::vector<std::vector<ConvSpec>> blocks_;
  std::vector<ConvSpec> scale_convs_;
  ConvSpec scale6_;
  std::vector<ConvSpec> persp_convs_;
  ConvSpec head_d1_, head_d2_, head_d3_, head_ps_;

  std::unique_ptr<Cache> cache_;

 public:
  Model(const Model& o);
  Model& operator=(const Model& o);
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model();
};

// Reference combination of the three density heads with a caller-supplied
// upsampler: d = (d1 + up((d2 + up(d3)) / 2)) / 2.
using Upsampler = std::function<ValueMap(const ValueMap&)>;
ValueMap combine_average(const ValueMap& d_e1, const ValueMap& d_e2,
                         const ValueMap& d_e3, const Upsampler& up);

// Standalone perspective-aware combination on maps, with cached state for
// the backward pass.
struct PaCombineState {
  ValueMap d_fine, d_coarse, p, w, d_out;
  PAWeightParams pw;
  bool valid = false;
};

PaCombineState pa_combine_forward(const ValueMap& d_fine,
                                  const ValueMap& d_coarse_up,
                                  const ValueMap& p, const PAWeightParams& pw);

struct PaCombineGrads {
  ValueMap d_fine, d_coarse, p;
  double alpha = 0.0;
  double beta = 0.0;
};

PaCombineGrads pa_combine_backward(const ValueMap& upstream,
                                   const PaCombineState& state);

}  // namespace pacnn
