#pragma once

#include <cstddef>
#include <functional>

namespace catgcn {

// Process-wide worker count for row-parallel kernels (spmm, per-node
// interaction). Defaults to 1. Kernels partition work so that every output
// element is owned by a single worker, so results do not depend on it.
void set_worker_count(std::size_t workers);
std::size_t worker_count();

// Calls body(begin, end) over contiguous chunks covering [0, n).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace catgcn
