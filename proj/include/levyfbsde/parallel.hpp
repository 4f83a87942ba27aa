#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace levyfbsde {

// Path blocks have a fixed size so block-wise reductions do not depend on the
// number of threads.
inline constexpr std::int64_t kPathBlock = 4096;

inline std::int64_t block_count(std::int64_t count, std::int64_t block = kPathBlock) {
  return (count + block - 1) / block;
}

// Calls fn(block_index, begin, end) for every block; blocks are claimed
// dynamically, so fn must only write block-local or path-local state.
template <class Fn>
void parallel_blocks(std::int64_t count, int threads, Fn&& fn, std::int64_t block = kPathBlock) {
  const std::int64_t nb = block_count(count, block);
  const int workers = static_cast<int>(std::clamp<std::int64_t>(threads, 1, std::max<std::int64_t>(nb, 1)));
  if (workers <= 1) {
    for (std::int64_t b = 0; b < nb; ++b) fn(b, b * block, std::min(count, (b + 1) * block));
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  auto work = [&] {
    for (;;) {
      const std::int64_t b = next.fetch_add(1);
      if (b >= nb) return;
      try {
        fn(b, b * block, std::min(count, (b + 1) * block));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_lock);
        if (!failure) failure = std::current_exception();
        next = nb;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace levyfbsde
