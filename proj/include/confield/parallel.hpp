#pragma once

#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace confield::par {

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

// Serial reference loop. Kept separate from map_index so tests can compare the
// two paths bit for bit.
template <class F>
void map_index_serial(std::size_t n, F&& f) {
  for (std::size_t i = 0; i < n; ++i) f(i);
}

// Parallel map over [0, n). Work items must be independent and write only to
// their own output slots; under that contract the result is identical for any
// thread count.
template <class F>
void map_index(std::size_t n, F&& f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    f(static_cast<std::size_t>(i));
#else
  map_index_serial(n, f);
#endif
}

// Sum with a fixed pairwise tree. The tree shape depends only on n, never on
// how many threads filled the buffer, so totals are reproducible bit for bit.
inline double sum_pairwise(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return sum_pairwise(x, half) + sum_pairwise(x + half, n - half);
}

inline double sum_pairwise(const std::vector<double>& x) {
  return sum_pairwise(x.data(), x.size());
}

// Map f over [0, n) into a buffer, then reduce with the fixed tree.
template <class F>
double sum_indexed(std::size_t n, F&& f) {
  std::vector<double> buf(n);
  map_index(n, [&](std::size_t i) { buf[i] = f(i); });
  return sum_pairwise(buf.data(), n);
}

template <class F>
double sum_indexed_serial(std::size_t n, F&& f) {
  std::vector<double> buf(n);
  map_index_serial(n, [&](std::size_t i) { buf[i] = f(i); });
  return sum_pairwise(buf.data(), n);
}

}  // namespace confield::par
