#include "egofuse/parallel.hpp"

namespace egofuse {

ThreadPool& ThreadPool::instance() {
  static ThreadPool pool;
  return pool;
}

ThreadPool::~ThreadPool() { stop_threads(); }

void ThreadPool::stop_threads() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    quit_ = true;
  }
  cv_work_.notify_all();
  for (auto& t : threads_) t.join();
  threads_.clear();
  quit_ = false;
}

void ThreadPool::start_threads(int n) {
  for (int i = 0; i < n; ++i) threads_.emplace_back([this] { worker_loop(); });
}

void ThreadPool::set_workers(int n) {
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  stop_threads();
  start_threads(n - 1);  // caller thread participates
}

void ThreadPool::worker_loop() {
  uint64_t seen = 0;
  for (;;) {
    {
      std::unique_lock<std::mutex> lk(mu_);
      cv_work_.wait(lk, [&] { return quit_ || generation_ != seen; });
      if (quit_) return;
      seen = generation_;
      active_.fetch_add(1);
    }
    const auto* body = body_;
    const int64_t total = total_;
    for (;;) {
      const int64_t i = next_.fetch_add(1);
      if (i >= total) break;
      (*body)(i);
    }
    if (active_.fetch_sub(1) == 1) cv_done_.notify_all();
  }
}

void ThreadPool::parallel_for(int64_t n, const std::function<void(int64_t)>& body) {
  if (n <= 0) return;
  if (threads_.empty() || n == 1) {
    for (int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  {
    std::lock_guard<std::mutex> lk(mu_);
    body_ = &body;
    total_ = n;
    next_.store(0);
    ++generation_;
  }
  cv_work_.notify_all();
  for (;;) {
    const int64_t i = next_.fetch_add(1);
    if (i >= n) break;
    body(i);
  }
  std::unique_lock<std::mutex> lk(mu_);
  cv_done_.wait(lk, [&] { return active_.load() == 0; });
  body_ = nullptr;
}

}  // namespace egofuse
