#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace dpm {

// Thread count: explicit setting, else DPM_THREADS, else 1.
int thread_count();
void set_thread_count(int n);

// Runs f(chunk, begin, end) over fixed-size chunks of [0, n). Chunk
// boundaries do not depend on the thread count, so callers that reduce
// per-chunk results in chunk order get identical sums for any setting.
template <class F>
void parallel_chunks(std::size_t n, std::size_t chunk, F&& f) {
  if (n == 0) return;
  const std::size_t nchunks = (n + chunk - 1) / chunk;
  const int nt = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(thread_count()), nchunks));
  if (nt <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c) f(c, c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int i = 0; i < nt; ++i)
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < nchunks; c = next++) f(c, c * chunk, std::min(n, (c + 1) * chunk));
    });
  for (auto& th : pool) th.join();
}

} // namespace dpm
