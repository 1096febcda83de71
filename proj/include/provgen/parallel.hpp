#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace provgen {

// Worker count: PROVGEN_THREADS if set (clamped to >= 1), else logical CPUs.
int worker_count();

// Caps worker_count() for the current thread while alive (latency benches
// run single-threaded).
class WorkerLimitGuard {
 public:
  explicit WorkerLimitGuard(int limit);
  ~WorkerLimitGuard();
  WorkerLimitGuard(const WorkerLimitGuard&) = delete;
  WorkerLimitGuard& operator=(const WorkerLimitGuard&) = delete;

 private:
  int previous_;
};

// Runs fn(begin, end) over contiguous chunks of [0, n) on up to worker_count()
// threads. fn must not touch state shared with other chunks. Exceptions from
// workers are rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// Produce per-index results in parallel, consume them serially in index order.
// The consume order is fixed, so any reduction folded in consume() is
// bit-identical regardless of thread count. Items are processed in windows of
// `chunk` to bound memory.
template <class T, class Produce, class Consume>
void parallel_ordered(std::size_t n, std::size_t chunk, Produce produce, Consume consume) {
  if (chunk == 0) chunk = 1;
  std::vector<T> window;
  for (std::size_t base = 0; base < n; base += chunk) {
    const std::size_t count = std::min(chunk, n - base);
    window.clear();
    window.resize(count);
    parallel_for(count, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) window[i] = produce(base + i);
    });
    for (std::size_t i = 0; i < count; ++i) consume(base + i, std::move(window[i]));
  }
}

}  // namespace provgen
