#ifndef HIERSR_DETAIL_PARALLEL_HPP
#define HIERSR_DETAIL_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace hiersr {

namespace detail {
inline std::atomic<unsigned>& thread_cap() {
    static std::atomic<unsigned> cap{[] {
        const char* env = std::getenv("HIERSR_THREADS");
        if (env == nullptr) return 0u;
        try {
            return static_cast<unsigned>(std::stoul(env));
        } catch (...) {
            return 0u;
        }
    }()};
    return cap;
}
}  // namespace detail

/// Caps worker threads used inside kernels. 0 means hardware concurrency.
inline void set_thread_count(unsigned n) { detail::thread_cap() = n; }

inline unsigned thread_count() {
    unsigned n = detail::thread_cap();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

namespace detail {

// Runs body(begin, end) over disjoint chunks of [0, n). Bodies must write
// disjoint outputs so the result is independent of the thread count.
template <class Body>
void parallel_for(std::size_t n, std::size_t work_per_item, Body&& body) {
    constexpr std::size_t kMinWork = std::size_t{1} << 16;
    unsigned workers = thread_count();
    if (workers <= 1 || n < 2 || n * std::max<std::size_t>(work_per_item, 1) < kMinWork) {
        body(std::size_t{0}, n);
        return;
    }
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&, w, b, e] {
            try {
                body(b, e);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

}  // namespace detail
}  // namespace hiersr

#endif
