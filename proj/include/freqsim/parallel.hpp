#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace freqsim {

inline unsigned& default_threads_ref() {
  static unsigned n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

inline unsigned default_threads() { return default_threads_ref(); }
inline void set_default_threads(unsigned n) { default_threads_ref() = std::max(1u, n); }

/// Calls f(i) for i in [0, n) on up to `threads` workers. Work items are claimed from an
/// atomic counter; callers write results by index, so output does not depend on scheduling.
/// The first exception thrown by any item is rethrown after all workers join.
template <class F>
void parallel_for(std::size_t n, F&& f, unsigned threads = default_threads()) {
  threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace freqsim
