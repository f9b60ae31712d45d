#pragma once

#include <cstddef>
#include <functional>

namespace chroma {

// Worker cap for parallel_for. Initialised from CHROMA_THREADS on first use;
// 0 or 1 runs everything on the calling thread.
int thread_count();
void set_thread_count(int threads);

// Runs fn(i) for i in [0, n). Each index is handled by exactly one thread and
// must write to disjoint memory, so results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace chroma
