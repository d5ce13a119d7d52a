/*
 * parallel.hpp
 */

#ifndef STOCHABS_PARALLEL_HPP_
#define STOCHABS_PARALLEL_HPP_

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace stochabs {

/**
 * Runs fn(begin, end) over [0, count) split into contiguous chunks, one per
 * worker. Results must be written to preallocated slots so the outcome does
 * not depend on the schedule. The first exception thrown by any worker is
 * rethrown.
 */
template <class Fn> void parallel_for(std::size_t count, unsigned workers, Fn &&fn) {
  if (workers <= 1 || count < 2) {
    fn(std::size_t(0), count);
    return;
  }
  workers = unsigned(std::min<std::size_t>(workers, count));
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex mu;
  const std::size_t chunk = (count + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    std::size_t b = w * chunk, e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto &t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

} // namespace stochabs

#endif /* STOCHABS_PARALLEL_HPP_ */
