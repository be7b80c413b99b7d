#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace slab {

// Runs fn(begin, end, shard) over `shards` contiguous ranges of [0, n).
// Shard boundaries depend only on n and the shard count, so callers that write
// per-index outputs get the same result for any number of workers.
template <typename Fn>
void parallel_for_ranges(std::size_t n, unsigned workers, Fn&& fn) {
  const std::size_t shards = std::max<std::size_t>(1, std::min<std::size_t>(workers, n));
  if (shards == 1) {
    fn(std::size_t{0}, n, std::size_t{0});
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(shards);
  threads.reserve(shards);
  for (std::size_t s = 0; s < shards; ++s) {
    const std::size_t begin = n * s / shards;
    const std::size_t end = n * (s + 1) / shards;
    threads.emplace_back([&, begin, end, s] {
      try {
        fn(begin, end, s);
      } catch (...) {
        errors[s] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace slab
