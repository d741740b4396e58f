#include "prnf/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>

namespace prnf {

ThreadPool::ThreadPool(int workers) {
  const int n = std::max(1, workers);
  threads_.reserve(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n - 1; ++i) {
    threads_.emplace_back([this] { worker_loop(); });
  }
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    stop_ = true;
  }
  cv_work_.notify_all();
  for (auto& t : threads_) t.join();
}

bool ThreadPool::run_one() {
  std::int64_t begin, end;
  int idx;
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (next_ >= n_) return false;
    begin = next_;
    end = std::min(n_, next_ + chunk_);
    idx = static_cast<int>(next_ / chunk_);
    next_ = end;
    ++pending_;
  }
  (*fn_)(begin, end, idx);
  {
    std::lock_guard<std::mutex> lk(mu_);
    --pending_;
  }
  cv_done_.notify_one();
  return true;
}

void ThreadPool::worker_loop() {
  std::uint64_t seen = 0;
  for (;;) {
    {
      std::unique_lock<std::mutex> lk(mu_);
      cv_work_.wait(lk, [&] { return stop_ || (generation_ != seen && next_ < n_); });
      if (stop_) return;
      seen = generation_;
    }
    while (run_one()) {
    }
  }
}

void ThreadPool::for_chunks(std::int64_t n, std::int64_t chunk_size,
                            const std::function<void(std::int64_t, std::int64_t, int)>& fn) {
  if (n <= 0) return;
  chunk_size = std::max<std::int64_t>(1, chunk_size);
  if (n <= chunk_size || threads_.empty()) {
    // small jobs stay on the calling thread, same chunk boundaries
    std::int64_t b = 0;
    int idx = 0;
    while (b < n) {
      const std::int64_t e = std::min(n, b + chunk_size);
      fn(b, e, idx++);
      b = e;
    }
    return;
  }
  {
    std::lock_guard<std::mutex> lk(mu_);
    fn_ = &fn;
    n_ = n;
    chunk_ = chunk_size;
    next_ = 0;
    ++generation_;
  }
  cv_work_.notify_all();
  while (run_one()) {
  }
  std::unique_lock<std::mutex> lk(mu_);
  cv_done_.wait(lk, [&] { return next_ >= n_ && pending_ == 0; });
}

namespace {
std::atomic<int> g_default_workers{0};
}

void set_default_workers(int workers) { g_default_workers.store(workers); }

int default_workers() {
  int w = g_default_workers.load();
  if (w > 0) return w;
  if (const char* env = std::getenv("PRNF_WORKERS")) {
    const int e = std::atoi(env);
    if (e > 0) return e;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

ThreadPool& global_pool() {
  static ThreadPool pool(default_workers());
  return pool;
}

}  // namespace prnf
