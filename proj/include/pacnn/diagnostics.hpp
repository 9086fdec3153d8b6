#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pacnn/grad_check.hpp"
#include "pacnn/model.hpp"

namespace pacnn {

struct GradSuiteCase {
  std::string name;
  double max_rel_err = 0.0;
  bool finite = true;
  bool passed = false;
};

struct GradSuiteResult {
  std::string suite;
  std::vector<GradSuiteCase> cases;
  double tolerance = 0.0;
  bool passed = false;  // every case finite and within tolerance
};

// Seeded random instances of the perspective-weighted combination, checked
// against central finite differences on both density maps, the perspective
// map and the two gate scalars. The last two instances drive the gate deep
// into saturation (|alpha * (p - beta)| > 10 over much of the map), where
// the analytic parameter gradients are near zero and must stay finite.
GradSuiteResult run_pa_grad_suite(int instances, std::uint64_t seed,
                                  double tolerance = 1e-4);

// Finite-difference check of every loss gradient (MSE tighter at 1e-6,
// structural-dissimilarity at the given tolerance) on seeded random maps.
GradSuiteResult run_loss_grad_suite(int instances, std::uint64_t seed,
                                    double tolerance = 1e-4);

// Builds a tiny smooth-activation model (well under 5k parameters), runs
// the full composite objective on a 32x32 scene, and checks the analytic
// gradient of every parameter tensor against central differences.
GradSuiteResult run_model_grad_suite(std::uint64_t seed,
                                     double tolerance = 1e-3,
                                     std::size_t* param_count = nullptr);

// The tiny configuration used by run_model_grad_suite, exposed so tests
// and tools can report its exact size.
ModelConfig tiny_model_config();

}  // namespace pacnn
