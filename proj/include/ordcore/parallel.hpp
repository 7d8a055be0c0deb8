#pragma once

#include <cstddef>
#include <functional>

namespace ordcore {

// Worker cap from CORE_THREADS (unset, empty or invalid means 1).
std::size_t thread_count();

// Runs body(begin, end) over contiguous chunks of [0, n). The chunking depends
// only on n and the worker cap, so callers that combine per-chunk results in
// chunk order get identical output for a given cap.
void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t chunk, std::size_t begin, std::size_t end)>& body,
                     std::size_t chunks);

}  // namespace ordcore
