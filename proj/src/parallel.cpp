#include "perronlab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace perronlab {

namespace {
std::atomic<int> g_threads{1};
}

void set_threads(int n) { g_threads = std::max(1, n); }
int threads() { return g_threads.load(); }

void parallel_for(long n, const std::function<void(long, long)>& body, long chunk) {
  if (n <= 0) return;
  if (chunk <= 0) chunk = std::max(1L, n / 64);
  const long nchunks = (n + chunk - 1) / chunk;
  std::vector<std::exception_ptr> errors(nchunks);
  std::atomic<long> next{0};
  auto worker = [&] {
    for (;;) {
      long c = next.fetch_add(1);
      if (c >= nchunks) return;
      long b = c * chunk;
      long e = std::min(n, b + chunk);
      try {
        body(b, e);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  int nt = static_cast<int>(std::min<long>(threads(), nchunks));
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace perronlab
