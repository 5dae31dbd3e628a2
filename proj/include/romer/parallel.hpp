#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace romer {

// Worker count for trial/token parallelism. ROMER_SIM_THREADS caps it;
// 0 or unset means auto (hardware concurrency).
inline unsigned worker_count() {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("ROMER_SIM_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<unsigned>(v) < hw ? static_cast<unsigned>(v) : hw;
    }
    return hw;
}

// Runs f(i) for i in [0, n) on up to worker_count() threads. Each index owns
// its output slot, so results do not depend on scheduling.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
    const unsigned workers = n < 2 ? 1 : std::min<std::size_t>(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (std::size_t i = w; i < n; i += workers) f(i);
        });
    }
    for (std::thread& t : pool) t.join();
}

}  // namespace romer
