#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace evtmem {

// Global worker cap shared by all parallel loops. 0 means "use hardware
// concurrency". The CLI sets this from --threads / EVTMEM_THREADS.
void set_max_threads(int n);
int max_threads();

namespace detail {
inline thread_local bool in_parallel_region = false;
}

// Index-space parallel map. Results must be written to preallocated slots so
// the outcome is independent of scheduling; nested calls degrade to serial.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, int threads = 0) {
  if (n == 0) return;
  int want = threads > 0 ? threads : max_threads();
  if (want <= 0) want = static_cast<int>(std::thread::hardware_concurrency());
  if (want < 1) want = 1;
  const std::size_t nthreads =
      std::min<std::size_t>(static_cast<std::size_t>(want), n);
  if (nthreads == 1 || detail::in_parallel_region) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto worker = [&]() {
    detail::in_parallel_region = true;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load(std::memory_order_relaxed)) break;
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        break;
      }
    }
    detail::in_parallel_region = false;
  };

  std::vector<std::thread> pool;
  pool.reserve(nthreads - 1);
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace evtmem
