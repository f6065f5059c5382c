#include "collapse/threading.hpp"

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace collapse {

namespace {

int resolve_worker_count() {
  if (const char* env = std::getenv("COLLAPSE_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
    return 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::atomic<int> g_workers{0};

}  // namespace

int worker_count() {
  int n = g_workers.load(std::memory_order_relaxed);
  if (n == 0) {
    n = resolve_worker_count();
    g_workers.store(n, std::memory_order_relaxed);
  }
  return n;
}

void set_worker_count(int n) { g_workers.store(n < 1 ? 1 : n, std::memory_order_relaxed); }

void parallel_tiles(int64_t n, int64_t tile,
                    const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  if (tile < 1) tile = 1;
  const int64_t n_tiles = (n + tile - 1) / tile;
  const int workers = static_cast<int>(std::min<int64_t>(worker_count(), n_tiles));
  if (workers <= 1) {
    for (int64_t t = 0; t < n_tiles; ++t) fn(t * tile, std::min(n, (t + 1) * tile));
    return;
  }
  std::atomic<int64_t> next{0};
  auto drain = [&] {
    for (;;) {
      const int64_t t = next.fetch_add(1, std::memory_order_relaxed);
      if (t >= n_tiles) return;
      fn(t * tile, std::min(n, (t + 1) * tile));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(drain);
  drain();
  for (auto& th : pool) th.join();
}

}  // namespace collapse
