#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace mmoba {

// Worker default: MMOF_WORKERS if set, else hardware concurrency.
inline int default_workers() {
  if (const char* env = std::getenv("MMOF_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs produce(i) for i in [0, n) on a bounded pool and hands results to
// consume(i, result) strictly in index order on the calling thread. At most
// `window` results are buffered, so memory stays bounded for big runs.
template <class T>
void ordered_parallel(int n, int workers, const std::function<T(int)>& produce,
                      const std::function<void(int, T&&)>& consume, int window = 0) {
  if (n <= 0) return;
  workers = std::clamp(workers, 1, n);
  if (window <= 0) window = 2 * workers;
  if (workers == 1) {
    for (int i = 0; i < n; ++i) consume(i, produce(i));
    return;
  }
  std::mutex mu;
  std::condition_variable cv;
  std::map<int, T> ready;
  int next_claim = 0;
  int next_consume = 0;
  bool failed = false;
  std::exception_ptr error;

  auto worker = [&] {
    for (;;) {
      int i;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return failed || next_claim >= n || next_claim < next_consume + window; });
        if (failed || next_claim >= n) return;
        i = next_claim++;
      }
      try {
        T result = produce(i);
        std::lock_guard lock(mu);
        ready.emplace(i, std::move(result));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failed) error = std::current_exception();
        failed = true;
      }
      cv.notify_all();
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);

  try {
    while (next_consume < n) {
      T item;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return failed || ready.count(next_consume) > 0; });
        if (failed) break;
        auto it = ready.find(next_consume);
        item = std::move(it->second);
        ready.erase(it);
      }
      consume(next_consume, std::move(item));
      {
        std::lock_guard lock(mu);
        ++next_consume;
      }
      cv.notify_all();
    }
  } catch (...) {
    std::lock_guard lock(mu);
    if (!failed) error = std::current_exception();
    failed = true;
  }
  cv.notify_all();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Convenience: collect all results in index order.
template <class T>
std::vector<T> parallel_map(int n, int workers, const std::function<T(int)>& produce) {
  std::vector<T> out(static_cast<std::size_t>(std::max(0, n)));
  ordered_parallel<T>(n, workers, produce, [&](int i, T&& v) { out[static_cast<std::size_t>(i)] = std::move(v); });
  return out;
}

}  // namespace mmoba
