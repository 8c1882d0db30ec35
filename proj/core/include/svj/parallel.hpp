#pragma once

#include <cstddef>
#include <functional>

namespace svj {

// Worker count: SVJ_THREADS if set (>= 1), else hardware concurrency.
unsigned worker_count();

// Calls fn(i) for i in [0, n) across worker_count() threads. Each index is
// handled exactly once; callers write results into per-index slots and reduce
// in index order, so output never depends on the thread count. The first
// exception thrown by fn is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace svj
