// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic parallel map: tasks write into preallocated slots indexed by
// task id and reductions happen sequentially afterwards, so results are
// bit-identical for any thread count.

#ifndef MOSAIC_THREAD_POOL_HPP
#define MOSAIC_THREAD_POOL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace mosaic {

inline void parallel_for(int n_threads, std::size_t count,
                         const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    const int workers = std::max(1, n_threads);
    if (workers == 1 || count == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    const int spawned = static_cast<int>(std::min<std::size_t>(workers, count));
    threads.reserve(spawned);
    for (int w = 0; w < spawned; ++w) {
        threads.emplace_back([&]() {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    }
    for (std::thread& t : threads) t.join();
}

}  // namespace mosaic

#endif  // MOSAIC_THREAD_POOL_HPP
