#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace ckde {

// Worker count from CKDE_WORKERS, else the hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("CKDE_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w >= 1) return w;
    } catch (const std::exception&) {
    }
  }
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

// Calls body(begin, end) on contiguous chunks of [0, n), one chunk per worker.
// The first exception thrown by any chunk is rethrown after all have joined.
template <class Body>
void parallel_chunks(std::size_t n, int workers, Body&& body) {
  if (n == 0) return;
  const std::size_t w = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, n);
  if (w == 1) {
    body(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(w);
  const std::size_t step = (n + w - 1) / w;
  for (std::size_t k = 0; k < w; ++k) {
    const std::size_t b = k * step, e = std::min(n, b + step);
    if (b >= e) break;
    threads.emplace_back([&, k, b, e] {
      try {
        body(b, e);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Calls body(begin, end) on fixed blocks of [0, n). Block boundaries depend
// only on n and block, never on the worker count, so per-block state (warm
// starts, substreams) gives reproducible results.
template <class Body>
void parallel_blocks(std::size_t n, std::size_t block, int workers, Body&& body) {
  if (n == 0) return;
  block = std::max<std::size_t>(block, 1);
  const std::size_t nblocks = (n + block - 1) / block;
  std::atomic<std::size_t> next{0};
  parallel_chunks(std::min<std::size_t>(nblocks, static_cast<std::size_t>(std::max(workers, 1))), workers,
                  [&](std::size_t, std::size_t) {
                    for (std::size_t k = next++; k < nblocks; k = next++)
                      body(k * block, std::min(n, (k + 1) * block));
                  });
}

}  // namespace ckde
