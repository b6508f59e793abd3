#pragma once

#include <functional>

namespace metaexp {

// Fan-out helper for data collection: items are partitioned statically over
// threads, so the work an index receives never depends on scheduling.  All
// determinism lives in per-item rng keys, making results independent of the
// worker count.  The first exception thrown by any item is rethrown on the
// calling thread after all workers join.
class WorkerPool {
 public:
  // n_threads <= 0 picks hardware concurrency; either way the count is capped
  // by the METAEXP_THREADS environment variable when set
  explicit WorkerPool(int n_threads = 0);

  void parallel_for(int n, const std::function<void(int)>& fn) const;
  int size() const { return n_threads_; }

 private:
  int n_threads_ = 1;
};

}  // namespace metaexp
