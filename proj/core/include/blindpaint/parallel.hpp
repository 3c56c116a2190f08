// Deterministic data parallelism: work is split into disjoint index ranges,
// so results never depend on the thread count or scheduling order.
#pragma once

#include <cstdint>
#include <functional>

namespace blindpaint {

// Number of threads used by parallel_for. 0 restores the hardware default.
// Not safe to call while a parallel_for is in flight.
void set_thread_count(int n);
int thread_count();

// Runs body(begin, end) over disjoint subranges covering [0, n).
// Each index is processed by exactly one invocation; callers must make
// per-index work independent. Nested calls execute inline.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

// Convenience wrapper: body(i) per index.
void parallel_for_each(std::int64_t n, const std::function<void(std::int64_t)>& body);

}  // namespace blindpaint
