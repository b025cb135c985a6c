#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace cesdem {

// Global worker-count knob. n <= 0 resets to the hardware default.
void set_worker_count(int n);
int worker_count();

struct BlockRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Fixed-size blocking of [0, n). Boundaries depend only on n and block_size,
// never on the worker count, so block-indexed reductions are bit-reproducible
// at any thread count.
std::vector<BlockRange> fixed_blocks(std::size_t n, std::size_t block_size);

// Runs fn(i) for i in [0, count) on the worker pool. fn must write only to
// slots it owns (indexed by i); scheduling order is unspecified.
void parallel_for_index(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace cesdem
