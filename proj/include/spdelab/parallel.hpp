#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace spdelab {

// Runs fn(i) for every i in [0, n) on up to `workers` threads. Callers write
// results into slots indexed by i and reduce them afterwards in index order,
// which keeps every total independent of the worker count. If several items
// throw, the exception of the smallest index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::size_t error_index = n;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  const std::size_t spawn = std::min(threads, n);
  pool.reserve(spawn);
  for (std::size_t t = 0; t < spawn; ++t) pool.emplace_back(body);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

// Mean / second central moment accumulator (Welford, Chan merge).
struct RunningStats {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) noexcept {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }

  void merge(const RunningStats& o) noexcept {
    if (o.n == 0.0) return;
    if (n == 0.0) {
      *this = o;
      return;
    }
    const double total = n + o.n;
    const double d = o.mean - mean;
    mean += d * o.n / total;
    m2 += o.m2 + d * d * n * o.n / total;
    n = total;
  }

  double variance() const noexcept { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
  double std_err() const noexcept { return n > 1.0 ? std::sqrt(variance() / n) : 0.0; }
};

// Fixed block size used to split Monte Carlo ensembles; independent of the
// number of workers so reductions always follow the same tree.
inline constexpr std::size_t kReductionBlock = 256;

inline std::size_t block_count(std::size_t n, std::size_t block = kReductionBlock) {
  return (n + block - 1) / block;
}

}  // namespace spdelab
