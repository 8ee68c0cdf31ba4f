// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace pairmerge {

// Worker cap shared by every parallel loop in the library. 1 means run inline.
void set_max_threads(int n);
int max_threads();

namespace detail {
// True inside a parallel_for worker; nested loops then run inline.
inline thread_local bool in_worker = false;
}  // namespace detail

// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks are disjoint so
// fn may write to per-index outputs without synchronization.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_chunk = 1) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(max_threads()),
                            std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_chunk)));
  if (workers <= 1 || n == 0 || detail::in_worker) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&fn, begin, end] {
      detail::in_worker = true;
      fn(begin, end);
    });
  }
}

}  // namespace pairmerge
