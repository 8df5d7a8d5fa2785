#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <span>
#include <thread>
#include <vector>

namespace smoothfit {

/// Runs fn(i) for i in [0, count) on up to `threads` workers with static
/// contiguous chunking. Results must be written to per-index slots so the
/// outcome does not depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> workers;
        workers.reserve(threads);
        const std::size_t chunk = (count + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(count, begin + chunk);
            workers.emplace_back([&, t, begin, end] {
                try {
                    for (std::size_t i = begin; i < end; ++i) fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Pairwise (cascade) summation in index order; the result depends only on
/// the input sequence.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// SplitMix64 finalizer, used for counter-based seed splitting.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed of stream `index` derived from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

}  // namespace smoothfit
