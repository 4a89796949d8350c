#pragma once

#include <cstddef>
#include <functional>

namespace cxr {

// Worker cap from CXR_FORGE_THREADS (0 or unset = hardware concurrency).
std::size_t thread_count();

// Applies the cap to the BLAS backend as well. Call once at startup.
void configure_threads();

// Runs body(i) for i in [0, count). Each index is handled by exactly one worker,
// so results are independent of the worker count as long as body(i) only writes
// to slots owned by i.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace cxr
