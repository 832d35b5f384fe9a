#pragma once

#include <cstddef>
#include <functional>

namespace smore {

/// Worker count: the value set by set_thread_count(), else SMORE_THREADS, else the
/// hardware concurrency.
std::size_t thread_count();
/// 0 restores the default resolution order.
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, n). Each index is visited exactly once; callers write
/// results into per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace smore
