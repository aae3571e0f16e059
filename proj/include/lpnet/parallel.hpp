#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lpnet {

/// Runs f(0..n-1) on up to `threads` threads with a fixed index-to-thread
/// assignment. The first exception thrown by any call is rethrown.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) f(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace lpnet
