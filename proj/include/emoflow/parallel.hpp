#pragma once

#include <cstddef>
#include <functional>

namespace emoflow::parallel {

/// EMOFLOW_THREADS when set to a positive integer, otherwise the hardware
/// concurrency (at least 1).
int worker_count();

/// Calls fn(i) for every i in [0, n) on up to worker_count() threads. If any
/// call throws, the exception from the lowest index is rethrown after all
/// workers finish.
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace emoflow::parallel
