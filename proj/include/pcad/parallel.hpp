#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>

#include <omp.h>

namespace pcad {

// Thread budget: explicit request > PCAD_THREADS env > hardware concurrency.
inline int resolve_threads(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("PCAD_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Static loop split. Every reduction in the codebase is written as ordered
// per-chunk partials, so results are identical for any thread count.
template <class F>
void parallel_for(int n, int threads, F&& body) {
    if (n <= 0) return;
    if (threads <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
#pragma omp parallel for num_threads(std::min(threads, n)) schedule(static)
    for (int i = 0; i < n; ++i) body(i);
}

}  // namespace pcad
