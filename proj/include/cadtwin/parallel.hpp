#pragma once

#include <cstddef>
#include <functional>

namespace cadtwin {

// Process-wide worker count used by the internally parallel kernels.
void set_thread_count(int threads);
int thread_count();

// Runs body(chunk_index, begin, end) over [0, count) split into fixed-size
// chunks. The chunking depends only on count and chunk_size, never on the
// thread count, so per-chunk partial results reduced in chunk order are
// bit-identical for any number of threads.
void parallel_chunks(std::size_t count, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

inline std::size_t chunk_count(std::size_t count, std::size_t chunk_size) {
  return (count + chunk_size - 1) / chunk_size;
}

}  // namespace cadtwin
