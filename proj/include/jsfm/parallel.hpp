#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace jsfm {

/// Worker count for data-parallel loops. JSFM_NUM_THREADS overrides the
/// hardware default; results never depend on it except through the fixed
/// per-chunk reduction order.
inline int num_threads() {
  if (const char* env = std::getenv("JSFM_NUM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Splits [0, n) into `chunks` contiguous ranges and calls fn(chunk, begin, end)
/// for each, concurrently when more than one chunk is requested.
template <typename Fn>
void parallel_chunks(int n, int chunks, Fn&& fn) {
  chunks = std::clamp(chunks, 1, std::max(1, n));
  if (chunks == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(chunks);
  for (int c = 0; c < chunks; ++c) {
    const int begin = static_cast<int>(static_cast<long long>(n) * c / chunks);
    const int end = static_cast<int>(static_cast<long long>(n) * (c + 1) / chunks);
    workers.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
  }
  for (auto& w : workers) w.join();
}

}  // namespace jsfm
