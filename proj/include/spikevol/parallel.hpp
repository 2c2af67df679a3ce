#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace spikevol {

// Worker count from SPIKEVOL_WORKERS, defaulting to the hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("SPIKEVOL_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return static_cast<unsigned>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs body(i) for i in [0, n). Each index must write only to its own output
// slot; results are then independent of scheduling. The first exception thrown
// by any worker is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace spikevol
