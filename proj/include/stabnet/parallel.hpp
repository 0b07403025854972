// Trial-level parallelism helper.
//
// Experiments fan independent Monte Carlo trials across workers. Each trial
// owns a generator derived from (seed, trial index) and writes into its own
// result slot, so the reduction is order-independent and the worker count
// never changes the output.
#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace stabnet {

template <typename Fn>
void parallel_for_trials(int workers, int trials, Fn&& body) {
  if (trials <= 0) return;
  const int used = std::max(1, std::min(workers, trials));
  if (used == 1) {
    for (int t = 0; t < trials; ++t) body(t);
    return;
  }
  std::vector<std::thread> pool;
  std::mutex error_mutex;
  std::exception_ptr first_error;
  pool.reserve(used);
  for (int w = 0; w < used; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int t = w; t < trials; t += used) body(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace stabnet
