#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace omlab {

/// Run fn(block) for block = 0..count-1 on up to `workers` threads. Blocks
/// must write only to disjoint state; outputs are then independent of the
/// worker count and identical to the sequential order.
inline void parallel_blocks(std::size_t count, unsigned workers,
                            const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    if (workers <= 1 || count == 1) {
        for (std::size_t b = 0; b < count; ++b) fn(b);
        return;
    }
    const unsigned n_threads = static_cast<unsigned>(
        std::min<std::size_t>(workers, count));
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t b = next.fetch_add(1);
                if (b >= count) break;
                fn(b);
            }
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace omlab
