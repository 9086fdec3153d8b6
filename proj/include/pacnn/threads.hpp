#pragma once

namespace pacnn {

// Applies PACNN_THREADS to the OpenMP runtime if the variable is set and
// positive. Returns the thread count in effect afterwards. All parallel
// kernels in this library produce bit-identical results for any thread
// count; the variable only trades speed.
int init_threads_from_env();

int max_threads();

}  // namespace pacnn
