#pragma once

#include <cstdint>
#include <exception>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace forge {

inline int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Serial reference path, kept separate so tests and the benchmark can
/// compare it against the OpenMP dispatch.
template <class F>
void serial_for(std::int64_t n, F&& fn) {
  for (std::int64_t i = 0; i < n; ++i) fn(i);
}

/// Runs fn(i) for i in [0, n). Iterations must be independent; callers write
/// results to per-index slots so output does not depend on the schedule.
/// n_threads <= 0 means hardware default, n_threads == 1 is the serial path.
template <class F>
void parallel_for(std::int64_t n, int n_threads, F&& fn) {
  if (n_threads <= 0) n_threads = max_threads();
#if defined(_OPENMP)
  if (n_threads > 1 && n > 1) {
    std::exception_ptr err;
#pragma omp parallel for schedule(static) num_threads(n_threads)
    for (std::int64_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
    return;
  }
#endif
  serial_for(n, fn);
}

}  // namespace forge
