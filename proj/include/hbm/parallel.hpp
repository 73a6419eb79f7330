#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hbm {

/// Runs body(block) for block in [0, n_blocks) on `workers` threads. Blocks
/// are claimed from a shared counter; callers store per-block results by
/// index so the outcome does not depend on scheduling. The first exception
/// thrown by any block is rethrown after all workers stop.
template <class Body>
void parallel_blocks(std::size_t n_blocks, unsigned workers, const Body& body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(
                                                         std::max<std::size_t>(n_blocks, 1))));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t b = next.fetch_add(1);
      if (b >= n_blocks) return;
      try {
        body(b);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

inline unsigned default_workers() {
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace hbm
