#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace slam {

// Runs fn(begin, end) over a partition of [0, n) on up to `threads` threads.
// Work units must be independent; determinism is the caller's contract
// (per-row RNG substreams make results independent of the partition).
inline void parallel_for(int n, int threads,
                         const std::function<void(int, int)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n < 2 * threads) {
    fn(0, n);
    return;
  }
  int nt = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(nt);
  std::exception_ptr err;
  std::mutex err_mu;
  int chunk = (n + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    int b = t * chunk;
    int e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

inline int hardware_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

}  // namespace slam
