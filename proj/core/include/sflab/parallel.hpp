#pragma once

#include <cstdint>
#include <functional>

namespace sflab {

/// Worker budget: SFLAB_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
int worker_count();

/// Runs fn(i) for i in [0, count) on up to worker_count() threads. Work items
/// are independent, so results do not depend on the thread count. The first
/// exception thrown by any item is rethrown on the calling thread.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& fn);

}  // namespace sflab
