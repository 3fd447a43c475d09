#pragma once

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fd::par {

// Thread budget for all parallel kernels. FD_THREADS caps the OpenMP default;
// unset or invalid values fall back to the runtime's max.
inline int threads() {
#ifdef _OPENMP
  static const int cached = [] {
    int n = omp_get_max_threads();
    if (const char* env = std::getenv("FD_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (end != env && v >= 1 && v < 1024 && v < n) n = static_cast<int>(v);
    }
    return n;
  }();
  return cached;
#else
  return 1;
#endif
}

// Parallel loop over [0, n). Body must write only to slots owned by its index
// so results are identical for any thread count.
template <typename F>
void parallel_for(std::ptrdiff_t n, F&& body) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(fd::par::threads())
  for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
#else
  for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
#endif
}

// Serial reference loop with the same contract; kept so tests and the
// benchmark can compare the two paths directly.
template <typename F>
void serial_for(std::ptrdiff_t n, F&& body) {
  for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
}

}  // namespace fd::par
