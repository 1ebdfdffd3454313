#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lrm {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Work items must write
// only to their own slots; callers reduce afterwards in index order.
template <typename Fn>
void parallel_for(long n, int jobs, Fn&& fn) {
  if (n <= 0) return;
  jobs = std::max(1, std::min<int>(jobs, int(std::min<long>(n, 1L << 20))));
  if (jobs == 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr err;
  std::mutex m;
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (;;) {
        long i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(m);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace lrm
