#pragma once

#include <cstddef>
#include <functional>

namespace embkit {

// Runs fn(i) for i in [0, n) over `threads` workers on contiguous chunks.
// Callers write results into per-index slots, so output is independent of
// the thread count; threads <= 1 runs inline.
void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn);

// Thread-count default: EMBKIT_THREADS env var, else 1.
int default_thread_count();

}  // namespace embkit
