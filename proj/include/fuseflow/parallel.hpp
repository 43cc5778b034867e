#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace fuseflow {

// Splits [begin, end) into contiguous chunks, one worker thread per chunk.
// Callers must only write to disjoint output regions; results are identical
// for any worker count.
inline void parallel_for(int begin, int end, int workers,
                         const std::function<void(int, int)>& body) {
  int n = end - begin;
  if (n <= 0) return;
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    body(begin, end);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int lo = begin + w * chunk;
    int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(body, lo, hi);
  }
  for (auto& t : pool) t.join();
}

inline int default_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

}  // namespace fuseflow
