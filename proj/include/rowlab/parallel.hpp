#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace rowlab {

/// Runs body(i) for i in [0, count) on up to `threads` threads. Each index is visited by
/// exactly one thread, so bodies that only touch per-index state stay deterministic.
template <typename F>
void parallel_for(int count, int threads, F&& body) {
  threads = std::clamp(threads, 1, std::max(count, 1));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  {
    std::vector<std::jthread> workers;
    workers.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        try {
          for (int i = t; i < count; i += threads) body(i);
        } catch (...) {
          errors[static_cast<std::size_t>(t)] = std::current_exception();
        }
      });
    }
  }
  for (auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
}

}  // namespace rowlab
