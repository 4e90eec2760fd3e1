#pragma once
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace xvakit {

inline constexpr std::size_t kPathBlock = 4096;

inline std::size_t worker_count(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("XVAKIT_WORKERS")) {
        const long v = std::atol(env);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

/// Runs fn(block_index, begin, end) over fixed-size blocks of [0, n).
/// Blocks are assigned to threads dynamically; callers must make results
/// depend only on the block index (e.g. partial sums stored per block and
/// reduced sequentially afterwards) so output is worker-count independent.
template <typename Fn>
void parallel_blocks(std::size_t n, std::size_t workers, Fn&& fn, std::size_t block_size = kPathBlock) {
    if (n == 0) return;
    const std::size_t n_blocks = (n + block_size - 1) / block_size;
    workers = std::min(worker_count(workers), n_blocks);
    if (workers <= 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) fn(b, b * block_size, std::min(n, (b + 1) * block_size));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t b = next.fetch_add(1, std::memory_order_relaxed);
                if (b >= n_blocks || failed.load(std::memory_order_relaxed)) return;
                try {
                    fn(b, b * block_size, std::min(n, (b + 1) * block_size));
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!failed.exchange(true)) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failed.load()) std::rethrow_exception(error);
}

/// Deterministic sum of per-block partials in block order.
inline double reduce_blocks(const std::vector<double>& partials) {
    double s = 0.0;
    for (double v : partials) s += v;
    return s;
}

}  // namespace xvakit
