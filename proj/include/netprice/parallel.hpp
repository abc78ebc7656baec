#pragma once

// Deterministic chunked map-reduce over a sample index range.
//
// Work is split into fixed chunks whose boundaries depend only on the range
// size, never on the thread count; partial results are merged in chunk order.
// Results are therefore bit-identical for any worker count.

#include <cstddef>
#include <thread>
#include <vector>

namespace netprice {

inline constexpr int kReduceChunk = 64;  // samples per chunk

/// body(chunk_index, begin, end) fills partial[chunk_index]; merge happens in
/// chunk order by the caller reading `partials` front to back.
template <class Body>
void for_each_chunk(int count, int threads, Body&& body) {
  const int chunks = (count + kReduceChunk - 1) / kReduceChunk;
  auto run = [&](int chunk) {
    const int begin = chunk * kReduceChunk;
    const int end = std::min(count, begin + kReduceChunk);
    body(chunk, begin, end);
  };
  if (threads <= 1 || chunks <= 1) {
    for (int c = 0; c < chunks; ++c) run(c);
    return;
  }
  const int workers = std::min(threads, chunks);
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int c = w; c < chunks; c += workers) run(c);
    });
  for (auto& t : pool) t.join();
}

inline int chunk_count(int count) { return (count + kReduceChunk - 1) / kReduceChunk; }

}  // namespace netprice
