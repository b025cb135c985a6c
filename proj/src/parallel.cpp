#include "cesdem/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace cesdem {

namespace {
std::atomic<int> g_workers{0};  // 0 = hardware default

int hardware_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}
}  // namespace

void set_worker_count(int n) { g_workers.store(n > 0 ? n : 0); }

int worker_count() {
  int n = g_workers.load();
  return n > 0 ? n : hardware_workers();
}

std::vector<BlockRange> fixed_blocks(std::size_t n, std::size_t block_size) {
  std::vector<BlockRange> blocks;
  if (block_size == 0) block_size = 1;
  blocks.reserve(n / block_size + 1);
  for (std::size_t b = 0; b < n; b += block_size)
    blocks.push_back({b, b + block_size < n ? b + block_size : n});
  return blocks;
}

void parallel_for_index(std::size_t count, const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  const int workers = worker_count();
  if (workers <= 1 || count == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int spawn = static_cast<int>(std::min<std::size_t>(workers, count)) - 1;
  pool.reserve(spawn);
  for (int t = 0; t < spawn; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace cesdem
