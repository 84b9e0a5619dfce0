#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace evcal {

/// Runs fn(chunk) for chunk in [0, chunks) on up to `threads` workers. Work is
/// split by chunk index only, so callers that reduce per-chunk outputs in
/// index order get results independent of the thread count.
template <typename Fn>
void parallel_chunks(std::size_t chunks, int threads, Fn&& fn) {
    const auto workers = static_cast<std::size_t>(std::clamp<long>(threads, 1, static_cast<long>(std::max<std::size_t>(chunks, 1))));
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) fn(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (std::size_t c = next++; c < chunks; c = next++) {
            try {
                fn(c);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Half-open range of items covered by `chunk` when `n` items are split into
/// `chunks` nearly equal parts.
inline std::pair<std::size_t, std::size_t> chunk_range(std::size_t n, std::size_t chunks, std::size_t chunk) {
    return {n * chunk / chunks, n * (chunk + 1) / chunks};
}

}  // namespace evcal
