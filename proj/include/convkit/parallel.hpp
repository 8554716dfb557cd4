#pragma once

#include <cstddef>
#include <functional>

namespace convkit {

/// Worker count: hardware concurrency capped by the CONVKIT_THREADS environment variable.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Each index is processed exactly once; callers write
/// results into pre-sized slots so output order never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace convkit
