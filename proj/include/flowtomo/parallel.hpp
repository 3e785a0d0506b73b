#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flowtomo {

/// Runs fn(i) for i in [0, n). Iterations must write disjoint outputs; no
/// reduction crosses iterations, so results do not depend on thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) fn(static_cast<std::size_t>(i));
#else
    for (std::size_t i = 0; i < n; ++i) fn(i);
#endif
}

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

} // namespace flowtomo
