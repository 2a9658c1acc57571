// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mbnsep {

// Worker cap: MBNSEP_THREADS env var, overridable at runtime. Results are
// required to be independent of this value, so every parallel construct here
// either computes elements independently or reduces over a fixed partition.
namespace detail {

inline std::atomic<unsigned>& thread_cap() {
  static std::atomic<unsigned> cap = [] {
    if (const char* env = std::getenv("MBNSEP_THREADS")) {
      long v = std::strtol(env, nullptr, 10);
      if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1u;
  }();
  return cap;
}

}  // namespace detail

inline unsigned max_threads() { return detail::thread_cap().load(); }
inline void set_max_threads(unsigned n) { detail::thread_cap().store(n ? n : 1); }

// Runs fn(i) for i in [0, n). fn must not touch state shared across indices.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn) {
  const unsigned workers = std::min<size_t>(max_threads(), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  const size_t block = std::max<size_t>(1, n / (workers * 8));
  auto worker = [&] {
    for (;;) {
      const size_t begin = next.fetch_add(block);
      if (begin >= n) return;
      const size_t end = std::min(n, begin + block);
      try {
        for (size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mbnsep
