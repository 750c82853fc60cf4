#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace impact {

namespace detail {
inline std::atomic<unsigned>& thread_cap() {
  static std::atomic<unsigned> cap{1};
  return cap;
}
}  // namespace detail

/// Upper bound on worker threads used inside solver sweeps. Defaults to 1.
inline void set_max_threads(unsigned n) { detail::thread_cap().store(std::max(1u, n)); }
inline unsigned max_threads() { return detail::thread_cap().load(); }

/// Runs fn(i) for i in [begin, end). Each index is visited exactly once and
/// writes must be index-local, so the result does not depend on the thread count.
template <class Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn, std::size_t min_chunk = 256) {
  const std::size_t n = end > begin ? end - begin : 0;
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(max_threads(), (n + min_chunk - 1) / std::max<std::size_t>(min_chunk, 1)));
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = begin + w * chunk;
    const std::size_t hi = std::min(end, lo + chunk);
    pool.emplace_back([&, lo, hi, w] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace impact
