#pragma once

#include <cstddef>
#include <functional>

namespace brwre {

/// Runs body(i) for i in [0, count) on up to `threads` workers. Work is split
/// into contiguous index ranges; callers write results into per-index slots so
/// the outcome never depends on scheduling.
void parallelFor(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

unsigned defaultThreadCount();

}  // namespace brwre
