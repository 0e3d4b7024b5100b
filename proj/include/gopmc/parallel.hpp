#pragma once

// Deterministic parallel map over an index range.  Work is split into
// contiguous chunks; each index writes only its own slots, and callers
// reduce serially in index order afterwards.  Results are therefore
// identical for any worker count, including 1.

#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gopmc {

inline unsigned effective_threads(int requested) {
    if (requested > 0) return static_cast<unsigned>(requested);
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

template <class F>
void parallel_for_indexed(std::size_t n, F&& f, int threads = 0) {
    const unsigned nt = std::min<std::size_t>(effective_threads(threads), std::max<std::size_t>(n, 1));
    if (nt <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr first_error = nullptr;
    std::mutex err_mutex;
    const std::size_t chunk = (n + nt - 1) / nt;
    for (unsigned t = 0; t < nt; ++t) {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace gopmc
