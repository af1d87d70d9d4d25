#pragma once

#include <cstddef>
#include <functional>

namespace posereg {

/// Worker count: POSEREG_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
unsigned worker_count();

/// Calls fn(i) for i in [0, n) on up to worker_count() threads. Callers write
/// results into per-index slots, so output does not depend on scheduling.
/// The first exception thrown by fn is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace posereg
