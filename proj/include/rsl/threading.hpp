#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace rsl {

/// Runs fn(i) for i in [0, n) on up to `threads` workers over contiguous index
/// chunks. Each index writes only its own output slot, and callers reduce in
/// index order afterwards, so results are independent of the thread count.
inline void parallel_for(long n, int threads, const std::function<void(long)>& fn) {
    if (n <= 0) return;
    if (threads <= 1 || n == 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = static_cast<int>(std::min<long>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const long chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const long begin = w * chunk;
        const long end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end]() {
            for (long i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace rsl
