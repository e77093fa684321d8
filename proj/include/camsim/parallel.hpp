#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace camsim {

/// Splits [0, n) into `workers` contiguous chunks and runs f(begin, end, chunk)
/// on each. Chunk boundaries depend only on n and workers, so callers that
/// write per-chunk results and concatenate them get schedule-independent output.
template <class F>
void parallel_chunks(std::size_t n, int workers, F&& f)
{
    const std::size_t w = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(n, 1));
    if (w == 1) {
        f(std::size_t{0}, n, std::size_t{0});
        return;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(w);
    for (std::size_t c = 0; c < w; ++c) {
        const std::size_t begin = n * c / w;
        const std::size_t end = n * (c + 1) / w;
        threads.emplace_back([&, begin, end, c] {
            try {
                f(begin, end, c);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Number of chunks parallel_chunks will use.
inline std::size_t chunk_count(std::size_t n, int workers)
{
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(n, 1));
}

}  // namespace camsim
