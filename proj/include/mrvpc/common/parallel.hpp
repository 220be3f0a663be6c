#pragma once

#include <cstddef>
#include <functional>

namespace mrvpc {

/// Worker count: MRVPC_THREADS if set (>= 1), else hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Work is split into contiguous blocks, so any
/// output written to slot i is independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace mrvpc
