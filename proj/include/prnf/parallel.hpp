#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace prnf {

// Persistent worker pool. Work is split into chunks whose boundaries depend
// only on (n, chunk_size), never on the worker count, so any chunk-local
// accumulation followed by an ordered reduction is reproducible.
class ThreadPool {
 public:
  explicit ThreadPool(int workers);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  int workers() const { return static_cast<int>(threads_.size()) + 1; }

  // fn(begin, end, chunk_index); blocks until all chunks are done.
  void for_chunks(std::int64_t n, std::int64_t chunk_size,
                  const std::function<void(std::int64_t, std::int64_t, int)>& fn);

 private:
  void worker_loop();
  bool run_one();

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_work_;
  std::condition_variable cv_done_;
  const std::function<void(std::int64_t, std::int64_t, int)>* fn_ = nullptr;
  std::int64_t n_ = 0;
  std::int64_t chunk_ = 0;
  std::int64_t next_ = 0;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

// Process-wide pool; size fixed on first use (set_default_workers beforehand).
ThreadPool& global_pool();
void set_default_workers(int workers);
int default_workers();

inline void parallel_chunks(std::int64_t n, std::int64_t chunk_size,
                            const std::function<void(std::int64_t, std::int64_t, int)>& fn) {
  global_pool().for_chunks(n, chunk_size, fn);
}

}  // namespace prnf
