#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace protoscope {

/// Global worker count for parallel_for. 0 means hardware concurrency.
/// Tests flip this between 1 and N to assert schedule invariance.
inline std::size_t& parallel_workers() {
    static std::size_t workers = 0;
    return workers;
}

/// Runs fn(i) for i in [0, n). Each index must write only to its own slot of
/// any shared output; reductions happen after the join, in index order, so the
/// result is identical for any worker count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::size_t workers = parallel_workers();
    if (workers == 0) workers = std::thread::hardware_concurrency();
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    if (workers > n) workers = n;
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace protoscope
