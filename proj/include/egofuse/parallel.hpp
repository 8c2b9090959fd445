#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace egofuse {

// Deterministic parallelism: parallel_for only fills independent slots; any
// reduction over the results happens serially in index order at the caller.
// Thread count therefore never changes numeric output.
class ThreadPool {
 public:
  static ThreadPool& instance();

  // 0 -> hardware_concurrency. Safe to call between parallel_for calls.
  void set_workers(int n);
  int workers() const { return static_cast<int>(threads_.size()) + 1; }

  void parallel_for(int64_t n, const std::function<void(int64_t)>& body);

  ~ThreadPool();

 private:
  ThreadPool() = default;
  void stop_threads();
  void start_threads(int n);
  void worker_loop();

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_work_, cv_done_;
  const std::function<void(int64_t)>* body_ = nullptr;
  std::atomic<int64_t> next_{0};
  int64_t total_ = 0;
  std::atomic<int> active_ = 0;
  uint64_t generation_ = 0;
  bool quit_ = false;
};

inline void parallel_for(int64_t n, const std::function<void(int64_t)>& body) {
  ThreadPool::instance().parallel_for(n, body);
}

}  // namespace egofuse
