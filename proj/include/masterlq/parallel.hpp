#pragma once

#include <cstddef>
#include <functional>

namespace masterlq {

/// Worker count: MASTERLQ_THREADS if set (>= 1), else hardware concurrency.
int worker_count();

/// Fixed block size used for every schedule-independent reduction.
inline constexpr std::size_t kParallelBlock = 1024;

/// Calls fn(block_index, begin, end) for each fixed-size block of [0, n).
/// Block boundaries depend only on n, never on the worker count, so
/// per-block partial results combine identically under any schedule.
void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

inline std::size_t block_count(std::size_t n) { return (n + kParallelBlock - 1) / kParallelBlock; }

}  // namespace masterlq
