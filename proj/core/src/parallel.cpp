#include "blindpaint/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace blindpaint {
namespace {

thread_local bool tl_inside_pool = false;

class Pool {
 public:
  explicit Pool(int workers) : job_(nullptr), generation_(0), pending_(0), stop_(false) {
    for (int i = 0; i < workers; ++i) {
      threads_.emplace_back([this, i] { worker_loop(i + 1); });
    }
  }

  ~Pool() {
    {
      std::unique_lock<std::mutex> lock(mutex_);
      stop_ = true;
    }
    cv_start_.notify_all();
    for (auto& t : threads_) t.join();
  }

  int lanes() const { return static_cast<int>(threads_.size()) + 1; }

  // Runs job(lane) on every lane in [0, lanes()); blocks until all finish.
  void run(const std::function<void(int)>& job) {
    {
      std::unique_lock<std::mutex> lock(mutex_);
      job_ = &job;
      pending_ = static_cast<int>(threads_.size());
      ++generation_;
    }
    cv_start_.notify_all();

    tl_inside_pool = true;
    job(0);
    tl_inside_pool = false;

    std::unique_lock<std::mutex> lock(mutex_);
    cv_done_.wait(lock, [this] { return pending_ == 0; });
    job_ = nullptr;
  }

 private:
  void worker_loop(int lane) {
    tl_inside_pool = true;
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(int)>* job = nullptr;
      {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_start_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        job = job_;
      }
      (*job)(lane);
      {
        std::unique_lock<std::mutex> lock(mutex_);
        if (--pending_ == 0) cv_done_.notify_all();
      }
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable cv_start_;
  std::condition_variable cv_done_;
  const std::function<void(int)>* job_;
  std::uint64_t generation_;
  int pending_;
  bool stop_;
};

int g_thread_count = 0;  // 0 = hardware default, resolved lazily
Pool* g_pool = nullptr;
std::mutex g_pool_mutex;

int resolve_thread_count() {
  if (g_thread_count > 0) return g_thread_count;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

Pool* pool() {
  std::lock_guard<std::mutex> lock(g_pool_mutex);
  const int want = resolve_thread_count();
  if (g_pool != nullptr && g_pool->lanes() != want) {
    delete g_pool;
    g_pool = nullptr;
  }
  if (g_pool == nullptr && want > 1) {
    g_pool = new Pool(want - 1);
  }
  return g_pool;
}

}  // namespace

void set_thread_count(int n) {
  std::lock_guard<std::mutex> lock(g_pool_mutex);
  g_thread_count = n < 0 ? 0 : n;
  delete g_pool;
  g_pool = nullptr;
}

int thread_count() { return resolve_thread_count(); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (n <= 0) return;
  const int want = resolve_thread_count();
  if (want <= 1 || n == 1 || tl_inside_pool) {
    body(0, n);
    return;
  }
  Pool* p = pool();
  if (p == nullptr) {
    body(0, n);
    return;
  }
  const int lanes = std::min<std::int64_t>(p->lanes(), n);
  p->run([&](int lane) {
    if (lane >= lanes) return;
    // Fixed static split: lane k owns [k*n/lanes, (k+1)*n/lanes).
    const std::int64_t lo = n * lane / lanes;
    const std::int64_t hi = n * (lane + 1) / lanes;
    if (lo < hi) body(lo, hi);
  });
}

void parallel_for_each(std::int64_t n, const std::function<void(std::int64_t)>& body) {
  parallel_for(n, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) body(i);
  });
}

}  // namespace blindpaint
