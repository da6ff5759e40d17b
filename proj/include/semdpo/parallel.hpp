#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace semdpo {

// Run f(i) for i in [0, n). With jobs > 1 the indices are strided across
// threads; every f(i) must touch only its own output slot, which makes the
// result independent of the thread count.
template <typename F>
void parallel_for(std::size_t n, int jobs, F&& f) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
        threads.emplace_back([&f, t, workers, n] {
            for (std::size_t i = t; i < n; i += workers) f(i);
        });
    }
    for (auto& th : threads) th.join();
}

} // namespace semdpo
