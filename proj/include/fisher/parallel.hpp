#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace fisher {

// Runs fn(0..count-1) on up to `threads` workers. Tasks must write only to
// their own slots; outputs are then identical for any thread count.
template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, count);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace fisher
