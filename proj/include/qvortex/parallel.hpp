#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

// Work distribution for independent settings and bootstrap resamples. The
// QVORTEX_THREADS environment variable caps the worker count. Results are
// written to index-addressed slots, so the outcome does not depend on the
// scheduling order.

namespace qvortex::parallel {

inline unsigned max_threads() {
  if (const char* env = std::getenv("QVORTEX_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return unsigned(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t threads = std::min<std::size_t>(max_threads(), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      try {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace qvortex::parallel
