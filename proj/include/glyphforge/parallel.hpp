#pragma once

#include <cstddef>
#include <functional>

namespace glyphforge {

/// Worker cap from GLYPHFORGE_THREADS. 0 means deterministic single-thread;
/// unset means hardware concurrency.
std::size_t worker_count();

void set_worker_count(std::size_t n);

/// Runs fn(begin, end) over [0, n) split into contiguous chunks. Chunks
/// write disjoint outputs, so results do not depend on the worker count.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace glyphforge
