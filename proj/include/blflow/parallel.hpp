#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace blflow::parallel {

// Evaluates fn(i) for i in [0, n) across `jobs` threads, each result written
// to its own slot. Output ordering is fixed by index, so any fixed-order
// reduction over the result is deterministic regardless of worker count.
template <typename T, typename Fn>
std::vector<T> indexed_map(std::size_t n, int jobs, Fn&& fn) {
  std::vector<T> out(n);
  if (n == 0) return out;
  if (jobs <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  const int workers = static_cast<int>(std::min<std::size_t>(jobs, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) out[i] = fn(i);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

inline void indexed_run(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (jobs <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<std::size_t>(jobs, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace blflow::parallel
