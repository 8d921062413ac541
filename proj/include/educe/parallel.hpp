#pragma once

#include <cstddef>
#include <functional>

namespace educe {

// Worker-thread cap: EDUCE_THREADS if set, else available parallelism.
std::size_t worker_threads();

// Runs f(i) for i in [0, n), sharded across worker threads. Results must be
// written to per-index slots; any reduction happens in the caller so the
// outcome is independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f);

}  // namespace educe
