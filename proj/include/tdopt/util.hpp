#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace tdopt::util {

//! Decimal rendering with 17 significant digits; round-trips exactly.
std::string g17(double v);

//! Deterministic 1-D maximization by golden-section bracketing on [lo, hi].
//! Keeps the best point seen, including both interval ends. Stops when the
//! bracket width drops below xtol or the evaluation budget is exhausted.
double golden_max(const std::function<double(double)>& f, double lo, double hi,
                  double xtol, int max_evals, double* best_value = nullptr);

//! First n primes (2, 3, 5, ...), for Halton bases.
std::vector<std::uint32_t> first_primes(std::size_t n);

//! Halton radical-inverse point in (0, 1); index >= 1.
double halton(std::uint64_t index, std::uint32_t base);

//! Runs body(i) for i in [0, n). With threads > 1 the range is split into
//! contiguous chunks; each index is still processed exactly once, so writing
//! to slot i of a preallocated buffer keeps results deterministic. The first
//! exception thrown by any chunk is rethrown on the calling thread.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace tdopt::util
