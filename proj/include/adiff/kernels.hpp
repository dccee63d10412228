#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace adiff {

// Worker cap for every sharded loop in the library. 0 means hardware
// concurrency. Results never depend on this value.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Rows per shard. Fixed so reduction order is independent of the thread count.
inline constexpr std::size_t kShardRows = 2048;

inline std::size_t shard_count(std::size_t n) { return (n + kShardRows - 1) / kShardRows; }

// Runs fn(shard) for shard in [0, n_shards) on up to thread_count() threads.
void parallel_for_shards(std::size_t n_shards, const std::function<void(std::size_t)>& fn);

// Sum of squared differences, accumulated in double over four fixed lanes.
inline double squared_distance(std::span<const double> q, std::span<const float> x) {
    const std::size_t n = q.size();
    const double* a = q.data();
    const float* b = x.data();
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const double d0 = a[i] - double(b[i]);
        const double d1 = a[i + 1] - double(b[i + 1]);
        const double d2 = a[i + 2] - double(b[i + 2]);
        const double d3 = a[i + 3] - double(b[i + 3]);
        s0 += d0 * d0;
        s1 += d1 * d1;
        s2 += d2 * d2;
        s3 += d3 * d3;
    }
    for (; i < n; ++i) {
        const double d = a[i] - double(b[i]);
        s0 += d * d;
    }
    return (s0 + s1) + (s2 + s3);
}

} // namespace adiff
