#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstddef>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace ehrenfest {

/// Worker count: EHRENFEST_THREADS when set to a positive integer, otherwise
/// std::thread::hardware_concurrency (at least 1). Read on every call so a
/// process can be steered without restarting.
inline unsigned thread_budget() {
  if (const char* env = std::getenv("EHRENFEST_THREADS")) {
    unsigned v = 0;
    const char* end = env + std::strlen(env);
    auto [ptr, ec] = std::from_chars(env, end, v);
    if (ec == std::errc{} && ptr == end && v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw >= 1 ? hw : 1;
}

/// Invokes fn(chunk, lo, hi) for n_chunks half-open index ranges [lo, hi)
/// partitioning [0, n_items). The partition depends only on (n_items,
/// n_chunks), never on the worker count, so callers that reduce per-chunk
/// partials in chunk order get identical results for any thread budget.
/// Workers claim chunks dynamically; if callbacks throw, the exception from
/// the lowest-indexed failing chunk is rethrown after all workers finish.
template <class Fn>
void parallel_chunks(std::size_t n_items, std::size_t n_chunks, Fn&& fn) {
  if (n_items == 0 || n_chunks == 0) return;
  if (n_chunks > n_items) n_chunks = n_items;
  const std::size_t base = n_items / n_chunks;
  const std::size_t rem = n_items % n_chunks;
  auto bounds = [base, rem](std::size_t c) {
    const std::size_t lo = c * base + std::min(c, rem);
    const std::size_t hi = lo + base + (c < rem ? 1 : 0);
    return std::pair{lo, hi};
  };

  const std::size_t workers =
      std::min<std::size_t>(thread_budget(), n_chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) {
      const auto [lo, hi] = bounds(c);
      fn(c, lo, hi);
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mtx;
  std::size_t err_chunk = n_chunks;
  std::exception_ptr err;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1, std::memory_order_relaxed);
      if (c >= n_chunks) return;
      try {
        const auto [lo, hi] = bounds(c);
        fn(c, lo, hi);
      } catch (...) {
        std::lock_guard guard(err_mtx);
        if (c < err_chunk) {
          err_chunk = c;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace ehrenfest
