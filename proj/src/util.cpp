#include "tdopt/util.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace tdopt::util {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double golden_max(const std::function<double(double)>& f, double lo, double hi,
                  double xtol, int max_evals, double* best_value) {
  constexpr double invphi = 0.6180339887498949;
  double best_x = lo;
  double best_f = f(lo);
  int evals = 1;
  auto consider = [&](double x, double fx) {
    if (fx > best_f) {
      best_f = fx;
      best_x = x;
    }
  };
  if (evals < max_evals) {
    double fhi = f(hi);
    ++evals;
    consider(hi, fhi);
  }
  double a = lo, b = hi;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = 0, f2 = 0;
  if (evals < max_evals) {
    f1 = f(x1);
    ++evals;
    consider(x1, f1);
  }
  if (evals < max_evals) {
    f2 = f(x2);
    ++evals;
    consider(x2, f2);
  }
  while (b - a > xtol && evals < max_evals) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
      ++evals;
      consider(x2, f2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
      ++evals;
      consider(x1, f1);
    }
  }
  if (best_value) *best_value = best_f;
  return best_x;
}

std::vector<std::uint32_t> first_primes(std::size_t n) {
  std::vector<std::uint32_t> primes;
  std::uint32_t c = 2;
  while (primes.size() < n) {
    bool prime = true;
    for (std::uint32_t p : primes) {
      if (p * p > c) break;
      if (c % p == 0) {
        prime = false;
        break;
      }
    }
    if (prime) primes.push_back(c);
    ++c;
  }
  return primes;
}

double halton(std::uint64_t index, std::uint32_t base) {
  double result = 0.0;
  double f = 1.0 / base;
  std::uint64_t i = index;
  while (i > 0) {
    result += f * static_cast<double>(i % base);
    i /= base;
    f /= base;
  }
  return result;
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  std::size_t nthreads =
      threads > 1 ? std::min<std::size_t>(static_cast<std::size_t>(threads), n)
                  : 1;
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  std::size_t chunk = (n + nthreads - 1) / nthreads;
  for (std::size_t t = 0; t < nthreads; ++t) {
    std::size_t begin = t * chunk;
    std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end]() {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tdopt::util
