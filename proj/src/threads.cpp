#include "pacnn/threads.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace pacnn {

int init_threads_from_env() {
  const char* raw = std::getenv("PACNN_THREADS");
  if (raw != nullptr) {
    try {
      const int n = std::stoi(raw);
      if (n > 0) omp_set_num_threads(n);
    } catch (...) {
      // Unparsable value: leave the runtime default in place.
    }
  }
  return omp_get_max_threads();
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace pacnn
