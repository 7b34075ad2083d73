#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace meshfree {

/// Worker count: MESHFREE_THREADS caps it, default is the hardware count.
inline int max_threads() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* env = std::getenv("MESHFREE_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1 && cap < n) n = cap;
    }
    return n;
}

/// Runs f(i) for i in [0, n). Each index owns its output slot, so results are
/// identical to a serial loop regardless of the thread count.
template <class F>
void parallel_for(int n, F&& f) {
    const int nt = std::min(max_threads(), n);
    if (nt <= 1 || n < 64) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nt));
    const int chunk = (n + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        const int lo = t * chunk;
        const int hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &f]() {
            for (int i = lo; i < hi; ++i) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace meshfree
