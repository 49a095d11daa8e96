// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace ppou {

/// Runs fn(chunk_index, begin, end) over [0, n) split into `workers`
/// contiguous chunks. With workers <= 1 everything runs on the calling
/// thread. Chunk boundaries depend only on (n, workers), so any reduction
/// that combines per-chunk partials in chunk order is reproducible for a
/// fixed worker count.
inline void parallel_chunks(std::int64_t n, int workers,
                            const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  const int nchunks =
      static_cast<int>(std::max<std::int64_t>(1, std::min<std::int64_t>(workers, n)));
  if (nchunks == 1) {
    fn(0, 0, n);
    return;
  }
  const std::int64_t base = n / nchunks;
  const std::int64_t rem = n % nchunks;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nchunks));
  std::int64_t begin = 0;
  for (int c = 0; c < nchunks; ++c) {
    const std::int64_t len = base + (c < rem ? 1 : 0);
    const std::int64_t end = begin + len;
    pool.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
    begin = end;
  }
  for (auto& t : pool) t.join();
}

/// Element-wise parallel loop; fn(i) must not touch shared mutable state.
inline void parallel_for(std::int64_t n, int workers,
                         const std::function<void(std::int64_t)>& fn) {
  parallel_chunks(n, workers, [&fn](int, std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace ppou
