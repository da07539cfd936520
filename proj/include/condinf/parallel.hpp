#pragma once
// Minimal deterministic parallelism: an indexed parallel_for where every task
// writes only to its own slot, so results are identical for any thread count.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace condinf {

class ThreadPool {
 public:
  // n <= 0 selects the default: CONDINF_THREADS if set, else hardware threads.
  explicit ThreadPool(int n = 0) : n_(n > 0 ? n : default_threads()) {}

  int threads() const { return n_; }

  static int default_threads() {
    if (const char* env = std::getenv("CONDINF_THREADS")) {
      const int v = std::atoi(env);
      if (v > 0) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
  }

  // Runs f(0), ..., f(n-1); f must confine writes to per-index state.
  template <class F>
  void parallel_for(std::size_t n, F&& f) const {
    const int nt = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n_), n));
    if (nt <= 1) {
      for (std::size_t i = 0; i < n; ++i) f(i);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> threads;
    threads.reserve(nt - 1);
    for (int t = 1; t < nt; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
  }
};

}  // namespace condinf
