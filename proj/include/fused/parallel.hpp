#pragma once

#include <functional>

namespace fused {

// Run fn(0..n-1) across up to `workers` threads. Tasks are handed out by
// index so each call sees the same task set regardless of worker count;
// callers must write results into per-index slots and reduce sequentially
// afterwards to stay order-independent.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace fused
