#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace iternorm {

/// Global worker count used by all parallel loops. 0 = hardware concurrency.
void set_num_threads(int n);
int num_threads();

/// Static partition of [0, n) into at most num_threads() contiguous chunks.
/// fn(begin, end, worker) runs once per chunk; worker indices are dense and
/// chunk boundaries depend only on n and the thread count, so outputs written
/// to disjoint ranges are reproducible run to run.
void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t, int)>& fn);

}  // namespace iternorm
