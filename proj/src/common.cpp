#include "ser/common.hpp"

#include <atomic>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ser {

namespace {

std::atomic<int> g_workers{0};

// Persistent pool; workers park on a condition variable between jobs.
// A job is a (fn, chunk list); the caller thread executes the first chunk
// itself and then waits for the remaining ones.
class Pool {
 public:
  static Pool& instance() {
    static Pool pool;
    return pool;
  }

  void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
           int workers) {
    if (n == 0) return;
    std::size_t w = static_cast<std::size_t>(workers);
    if (w > n) w = n;
    if (w <= 1) {
      fn(0, n);
      return;
    }
    ensure_threads(w - 1);

    std::size_t chunk = (n + w - 1) / w;
    {
      std::lock_guard<std::mutex> lk(m_);
      fn_ = &fn;
      chunks_.clear();
      for (std::size_t i = 1; i < w; ++i) {
        std::size_t b = i * chunk;
        std::size_t e = std::min(n, b + chunk);
        if (b < e) chunks_.push_back({b, e});
      }
      pending_ = chunks_.size();
      next_ = 0;
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();

    try {
      fn(0, std::min(n, chunk));
    } catch (...) {
      std::lock_guard<std::mutex> lk(m_);
      if (!error_) error_ = std::current_exception();
    }

    std::unique_lock<std::mutex> lk(m_);
    done_cv_.wait(lk, [&] { return pending_ == 0; });
    fn_ = nullptr;
    if (error_) {
      auto err = error_;
      error_ = nullptr;
      lk.unlock();
      std::rethrow_exception(err);
    }
  }

 private:
  Pool() = default;
  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void ensure_threads(std::size_t n) {
    std::lock_guard<std::mutex> lk(m_);
    while (threads_.size() < n) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lk(m_);
      cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      while (next_ < chunks_.size()) {
        auto [b, e] = chunks_[next_++];
        const auto* fn = fn_;
        lk.unlock();
        std::exception_ptr err;
        try {
          (*fn)(b, e);
        } catch (...) {
          err = std::current_exception();
        }
        lk.lock();
        if (err && !error_) error_ = err;
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::mutex m_;
  std::condition_variable cv_, done_cv_;
  std::vector<std::thread> threads_;
  std::vector<std::pair<std::size_t, std::size_t>> chunks_;
  const std::function<void(std::size_t, std::size_t)>* fn_ = nullptr;
  std::exception_ptr error_;
  std::size_t pending_ = 0;
  std::size_t next_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace

void set_worker_count(int n) { g_workers.store(n); }

int worker_count() {
  int n = g_workers.load();
  if (n <= 0) {
    unsigned hc = std::thread::hardware_concurrency();
    n = hc == 0 ? 1 : static_cast<int>(hc);
  }
  return n;
}

void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  Pool::instance().run(n, fn, worker_count());
}

}  // namespace ser
