#pragma once

#include <cstdint>
#include <functional>

namespace acwm {

// Number of worker threads for data-parallel loops. Resolved once from the
// ACWM_THREADS environment variable (0 or 1 = serial); defaults to the
// hardware concurrency. Every parallel_for partitions work by independent
// output index with a fixed per-index accumulation order, so results are
// bitwise identical for any thread count.
int thread_count();

// Invokes fn(i) for i in [0, n). Chunked across threads when enabled.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace acwm
