#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#ifdef FUELTRENDS_OPENMP
#include <omp.h>
#endif

namespace fueltrends {

// Execution policy for the data-parallel kernels. Every kernel has a serial
// reference path; the openmp path must produce bit-identical results, which
// callers ensure by writing per-item results into preallocated slots and
// reducing in index order afterwards.
enum class Exec { serial, openmp };

template <class Fn>
void parallel_for(std::size_t n, Exec exec, Fn&& fn) {
  if (exec == Exec::openmp) {
#ifdef FUELTRENDS_OPENMP
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(n); ++i) fn(static_cast<std::size_t>(i));
    return;
#endif
  }
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

// Fixed-order sum of a term buffer; the reduction order never depends on the
// execution policy, so serial and openmp fills sum to the same bits.
inline double ordered_sum(const std::vector<double>& terms) {
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace fueltrends
