#include "util/parallel.hpp"

#include <cstdlib>
#include <thread>
#include <vector>

namespace acwm {

int thread_count() {
    static const int n = [] {
        const char* env = std::getenv("ACWM_THREADS");
        if (env != nullptr) {
            int v = std::atoi(env);
            return v <= 1 ? 1 : v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    int workers = thread_count();
    if (workers <= 1 || n < 2 * workers) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        int64_t lo = w * chunk;
        int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace acwm
