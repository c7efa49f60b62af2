#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fcdx {

// Worker pool bounded by FCDX_THREADS (default 1, which keeps every kernel
// on the calling thread). Work is split into index ranges chosen purely from
// (n, nthreads), and each output element is owned by exactly one range, so
// results are bitwise identical for any thread count.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  int size() const { return nthreads_; }

  // fn(begin, end) over [0, n) split into contiguous chunks.
  void parallel_ranges(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    int usable = static_cast<int>(std::min<std::int64_t>(nthreads_, n));
    if (usable <= 1) {
      fn(0, n);
      return;
    }
    std::int64_t chunk = (n + usable - 1) / usable;
    std::atomic<int> pending{0};
    std::mutex done_mutex;
    std::condition_variable done_cv;
    for (int t = 1; t < usable; ++t) {
      std::int64_t b = t * chunk;
      std::int64_t e = std::min<std::int64_t>(n, b + chunk);
      if (b >= e) continue;
      pending.fetch_add(1);
      submit(t - 1, [&, b, e] {
        fn(b, e);
        if (pending.fetch_sub(1) == 1) {
          std::lock_guard<std::mutex> lk(done_mutex);
          done_cv.notify_one();
        }
      });
    }
    fn(0, std::min<std::int64_t>(n, chunk));
    std::unique_lock<std::mutex> lk(done_mutex);
    done_cv.wait(lk, [&] { return pending.load() == 0; });
  }

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lk(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

 private:
  ThreadPool() {
    nthreads_ = 1;
    if (const char* env = std::getenv("FCDX_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) nthreads_ = v;
    }
    for (int i = 0; i + 1 < nthreads_; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  void submit(int, std::function<void()> task) {
    {
      std::lock_guard<std::mutex> lk(mutex_);
      queue_.push_back(std::move(task));
    }
    cv_.notify_one();
  }

  void worker_loop() {
    for (;;) {
      std::function<void()> task;
      {
        std::unique_lock<std::mutex> lk(mutex_);
        cv_.wait(lk, [this] { return stop_ || !queue_.empty(); });
        if (stop_ && queue_.empty()) return;
        task = std::move(queue_.front());
        queue_.erase(queue_.begin());
      }
      task();
    }
  }

  int nthreads_ = 1;
  std::vector<std::thread> workers_;
  std::vector<std::function<void()>> queue_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stop_ = false;
};

inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
  ThreadPool::instance().parallel_ranges(n, fn);
}

}  // namespace fcdx
