#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace reebflow {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/**
 * Runs fn(i) for i in [0, n) on up to `threads` workers.
 *
 * Scheduling is dynamic, so fn must write only to slot i of preallocated
 * output (plus its own Rng substream); under that contract the result is
 * independent of the thread count.
 */
inline void parallel_for(long long n, int threads, const std::function<void(long long)>& fn) {
    threads = resolve_threads(threads);
    if (threads <= 1 || n <= 1) {
        for (long long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<long long> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr eptr;
    std::mutex eptr_mutex;
    auto worker = [&] {
        for (;;) {
            long long i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(eptr_mutex);
                if (!failed.exchange(true)) eptr = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    int nw = static_cast<int>(std::min<long long>(threads, n));
    pool.reserve(nw);
    for (int t = 0; t < nw; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failed.load() && eptr) std::rethrow_exception(eptr);
}

}  // namespace reebflow
