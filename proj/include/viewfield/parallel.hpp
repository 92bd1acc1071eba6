#pragma once

#include <cstddef>
#include <functional>

namespace viewfield {

/// Worker count: `requested` if positive, else $NVF_THREADS, else the
/// hardware concurrency.
int resolve_threads(int requested = 0);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Iterations are
/// handed out in contiguous chunks; the first exception is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace viewfield
