#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace pdlab {

// Worker count: PDLAB_THREADS when set to a positive integer, otherwise the
// hardware concurrency (at least 1).
inline int thread_budget() {
  if (const char* env = std::getenv("PDLAB_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n) across the thread budget. Each index is handled
// exactly once; callers keep determinism by writing results into per-index
// slots and reducing serially afterwards.
inline void parallel_for(long long n, const std::function<void(long long)>& fn) {
  const int threads = thread_budget();
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (long long i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<long long>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (long long i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace pdlab
