#pragma once

#include <cstddef>
#include <functional>

namespace rmap {

// Number of worker threads used by parallel_for. Defaults to the hardware
// concurrency, clamped by the RMAP_THREADS environment variable when set.
std::size_t worker_count();

// Runs fn(begin, end) over a partition of [0, n) across the worker pool and
// blocks until all chunks complete. Chunks are contiguous, so per-element
// work is identical regardless of the thread count. Exceptions from workers
// are rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace rmap
