#include "spikegrad/buffer.hpp"

#include <mutex>
#include <unordered_map>

namespace spikegrad::detail {
namespace {

constexpr std::size_t kIdleBudget = std::size_t{256} << 20;

struct BlockCache {
  std::mutex mutex;
  std::unordered_map<std::size_t, std::vector<void*>> idle;
  std::size_t idle_bytes = 0;
};

// Never destroyed: tensors with static storage may release blocks during exit.
BlockCache& cache() {
  static BlockCache* c = new BlockCache;
  return *c;
}

}  // namespace

void* acquire_block(std::size_t bytes) {
  BlockCache& c = cache();
  {
    std::lock_guard lock(c.mutex);
    auto it = c.idle.find(bytes);
    if (it != c.idle.end() && !it->second.empty()) {
      void* block = it->second.back();
      it->second.pop_back();
      c.idle_bytes -= bytes;
      return block;
    }
  }
  return ::operator new(bytes);
}

void release_block(void* block, std::size_t bytes) noexcept {
  BlockCache& c = cache();
  {
    std::lock_guard lock(c.mutex);
    if (c.idle_bytes + bytes <= kIdleBudget) {
      try {
        c.idle[bytes].push_back(block);
        c.idle_bytes += bytes;
        return;
      } catch (...) {
      }
    }
  }
  ::operator delete(block);
}

std::size_t cached_block_bytes() noexcept {
  BlockCache& c = cache();
  std::lock_guard lock(c.mutex);
  return c.idle_bytes;
}

}  // namespace spikegrad::detail
