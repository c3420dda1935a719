#pragma once

#include <functional>

namespace perronlab {

/// Process-wide worker count used by the parallel loops (>= 1).
void set_threads(int n);
int threads();

/// Run body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on n, never on the thread count, so per-chunk results are
/// reproducible. If several chunks throw, the exception of the lowest chunk
/// is rethrown.
void parallel_for(long n, const std::function<void(long, long)>& body, long chunk = 0);

}  // namespace perronlab
