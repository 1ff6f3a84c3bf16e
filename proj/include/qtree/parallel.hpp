#pragma once

#include <cstddef>
#include <functional>

namespace qtree {

// QTREE_WORKERS if set and positive, else hardware concurrency (at least 1).
int worker_count();

// Runs fn(chunk) for chunk in [0, n_chunks) on up to `workers` threads.
// Chunks are the unit of determinism: results must depend only on the chunk
// index, never on which thread ran it. The first exception is rethrown.
void parallel_chunks(std::size_t n_chunks, const std::function<void(std::size_t)>& fn,
                     int workers = 0);

}  // namespace qtree
