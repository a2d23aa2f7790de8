#pragma once

#include <cstddef>
#include <functional>

namespace headshare {

// Runs fn(i) for every i in [0, n). `threads` caps the worker count; callers
// must write results into per-index slots so the partitioning can never
// change the outcome. The first exception thrown by a worker is rethrown.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace headshare
