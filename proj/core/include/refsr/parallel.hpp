#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace refsr {

/// Runs fn(begin, end) over contiguous chunks of [0, n) on up to `workers` threads.
/// Chunk boundaries depend only on n and workers, so results that are written per
/// index are identical to the sequential run.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t w = std::max(1, workers);
  if (w == 1 || n < 2) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t chunks = std::min(w, n);
  std::vector<std::thread> threads;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (std::size_t t = 0; t < chunks; ++t) {
    const std::size_t begin = n * t / chunks, end = n * (t + 1) / chunks;
    threads.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

/// Hardware concurrency with a floor of one.
inline int default_workers() {
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace refsr
