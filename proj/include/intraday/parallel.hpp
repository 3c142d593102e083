#ifndef INTRADAY_PARALLEL_HPP
#define INTRADAY_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace intraday {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is handled exactly once, so
/// writing into slot i of a pre-sized vector gives a schedule-independent result. The first
/// exception (lowest index) is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  std::size_t err_index = n;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  const auto threads = std::min<std::size_t>(jobs, n);
  pool.reserve(threads);
  for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
  pool.clear();  // joins
  if (err) std::rethrow_exception(err);
}

}  // namespace intraday

#endif  // INTRADAY_PARALLEL_HPP
