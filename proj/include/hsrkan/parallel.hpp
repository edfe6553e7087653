#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace hsrkan {

namespace detail {
inline std::atomic<std::size_t>& thread_cap() {
  static std::atomic<std::size_t> cap{0};  // 0 = not yet resolved
  return cap;
}
}  // namespace detail

// Worker-thread cap. Resolved once from HSRKAN_THREADS, otherwise the
// hardware concurrency.
inline std::size_t thread_count() {
  auto& cap = detail::thread_cap();
  std::size_t n = cap.load();
  if (n == 0) {
    n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("HSRKAN_THREADS")) {
      try {
        const long v = std::stol(env);
        if (v >= 1) n = static_cast<std::size_t>(v);
      } catch (...) {
      }
    }
    cap.store(n);
  }
  return n;
}

inline void set_thread_count(std::size_t n) { detail::thread_cap().store(std::max<std::size_t>(1, n)); }

// Runs fn(begin, end) over a partition of [0, n). Callers must only write to
// locations owned by their index range; results are then independent of the
// thread count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_grain = 1) {
  const std::size_t workers = std::min(thread_count(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_grain)));
  if (workers <= 1 || n < 2) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, w, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

// Training allocates and frees the same multi-megabyte buffers every step.
// glibc would hand each one back to the kernel and fault it in again, which
// costs about a third of the wall time on small machines; keep them instead.
inline void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace hsrkan
