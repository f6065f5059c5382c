#pragma once

#include <cstdint>
#include <functional>

namespace collapse {

/// Worker count: COLLAPSE_LAB_THREADS if set (clamped to >= 1), otherwise the
/// hardware concurrency. Overridable in-process for tests.
int worker_count();
void set_worker_count(int n);

/// Runs fn(begin, end) over [0, n) split into fixed tiles. Tile boundaries
/// depend only on (n, tile), never on the number of workers, and each tile
/// writes disjoint output, so results are bit-identical for any pool size.
void parallel_tiles(int64_t n, int64_t tile,
                    const std::function<void(int64_t, int64_t)>& fn);

}  // namespace collapse
